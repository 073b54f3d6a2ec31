#include "routeentry/ingest.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace routeentry;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("routeentry_ingest_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& content) const {
    const auto p = path / name;
    std::ofstream out(p);
    out << content;
    return p.string();
  }
};

} // namespace

TEST_CASE("load_flights accepts a clean file") {
  TempDir tmp;
  const auto path = tmp.file("flights.csv",
                             "year,origin,destination,carrier,passengers\n"
                             "2010,GRU,SDU,GOL,1200\n"
                             "2010,sdu,gru,GOL,1100\n"
                             "2011,GRU,SDU,LAT,900\n");
  const auto result = ingest::load_flights(path, {2008, 2018});
  REQUIRE(result.records.size() == 3);
  CHECK(result.rejects.empty());
  CHECK(result.records[1].origin == "SDU"); // case-normalized
}

TEST_CASE("load_flights rejects origin equal to destination with the line number") {
  TempDir tmp;
  const auto path = tmp.file("flights.csv",
                             "year,origin,destination,carrier,passengers\n"
                             "2010,GRU,GRU,GOL,10\n");
  REQUIRE_THROWS_WITH(ingest::load_flights(path, {2008, 2018}),
                      Catch::Matchers::ContainsSubstring(":2:") &&
                          Catch::Matchers::ContainsSubstring("origin equals destination"));
}

TEST_CASE("load_flights reports rows outside the window as rejects") {
  TempDir tmp;
  const auto path = tmp.file("flights.csv",
                             "year,origin,destination,carrier,passengers\n"
                             "2005,GRU,SDU,GOL,10\n");
  const auto result = ingest::load_flights(path, {2008, 2018});
  CHECK(result.records.empty());
  REQUIRE(result.rejects.size() == 1);
  CHECK(result.rejects[0].line_no == 2);
  CHECK_THAT(result.rejects[0].reason, Catch::Matchers::ContainsSubstring("outside window"));
}

TEST_CASE("accepted plus rejected rows account for every input row") {
  TempDir tmp;
  std::string body = "year,origin,destination,carrier,passengers\n";
  std::mt19937_64 rng(7);
  std::size_t rows = 0;
  for (int i = 0; i < 50; ++i) {
    const int year = 2000 + static_cast<int>(rng() % 25);
    body += std::to_string(year) + ",A" + std::to_string(i) + ",B" + std::to_string(i) +
            ",GOL," + std::to_string(rng() % 10000) + "\n";
    ++rows;
  }
  const auto path = tmp.file("flights.csv", body);
  const auto result = ingest::load_flights(path, {2008, 2018});
  CHECK(result.records.size() + result.rejects.size() == rows);
  for (const auto& r : result.rejects) CHECK(!r.reason.empty());
}

TEST_CASE("duplicate flight keys are a hard error listing both lines") {
  TempDir tmp;
  const auto path = tmp.file("flights.csv",
                             "year,origin,destination,carrier,passengers\n"
                             "2010,GRU,SDU,GOL,100\n"
                             "2011,GRU,SDU,GOL,100\n"
                             "2010,GRU,SDU,GOL,200\n");
  REQUIRE_THROWS_WITH(ingest::load_flights(path, {2008, 2018}),
                      Catch::Matchers::ContainsSubstring("duplicate") &&
                          Catch::Matchers::ContainsSubstring("2/4"));
}

TEST_CASE("load_flights validates schema and numeric fields") {
  TempDir tmp;
  const auto bad_header = tmp.file("a.csv", "year,origin,destination,passengers\n");
  CHECK_THROWS_AS(ingest::load_flights(bad_header, {2008, 2018}), io_error);
  const auto bad_pax = tmp.file("b.csv",
                                "year,origin,destination,carrier,passengers\n"
                                "2010,GRU,SDU,GOL,many\n");
  REQUIRE_THROWS_WITH(ingest::load_flights(bad_pax, {2008, 2018}),
                      Catch::Matchers::ContainsSubstring("non-integer"));
  const auto negative = tmp.file("c.csv",
                                 "year,origin,destination,carrier,passengers\n"
                                 "2010,GRU,SDU,GOL,-5\n");
  CHECK_THROWS_AS(ingest::load_flights(negative, {2008, 2018}), io_error);
}

TEST_CASE("flights round-trip through the canonical writer") {
  TempDir tmp;
  const std::string body = "year,origin,destination,carrier,passengers\n"
                           "2010,GRU,SDU,GOL,1200\n"
                           "2011,REC,VCP,AZU,3400\n";
  const auto path = tmp.file("flights.csv", body);
  const auto loaded = ingest::load_flights(path, {2008, 2018});
  const auto copy = (tmp.path / "copy.csv").string();
  ingest::write_flights(copy, loaded.records);
  std::ifstream in(copy);
  std::string line, reread;
  while (std::getline(in, line)) reread += line + "\n";
  CHECK(reread == body);
}

TEST_CASE("airport loading validates coordinates and uniqueness") {
  TempDir tmp;
  const std::string header = "code,lat,lon,secnd,slot,az_hub,rival_conn_share,landing_fee,natl_pax_share\n";
  const auto good = tmp.file("air.csv", header + "vcp,-23.0,-47.1,1,0,1,0.35,120.5,0.08\n");
  const auto airports = ingest::load_airports(good);
  REQUIRE(airports.size() == 1);
  CHECK(airports[0].code == "VCP");
  CHECK(airports[0].secondary);
  CHECK(airports[0].subject_hub);

  const auto bad_lat = tmp.file("bad1.csv", header + "AAA,91.0,0,0,0,0,0,1,0\n");
  CHECK_THROWS_AS(ingest::load_airports(bad_lat), io_error);
  const auto dup = tmp.file("bad2.csv", header + "AAA,0,0,0,0,0,0,1,0\nAAA,1,1,0,0,0,0,1,0\n");
  REQUIRE_THROWS_WITH(ingest::load_airports(dup),
                      Catch::Matchers::ContainsSubstring("duplicate airport code"));
}

TEST_CASE("city attributes enforce ranges") {
  TempDir tmp;
  const std::string header = "region,year,population,income,unempl,vacation\n";
  const auto good = tmp.file("c.csv", header + "R1,2010,150000,21000.5,0.12,0.04\n");
  const auto cities = ingest::load_cities(good);
  REQUIRE(cities.size() == 1);
  CHECK(cities[0].population == 150000.0);

  CHECK_THROWS_AS(ingest::load_cities(tmp.file("c1.csv", header + "R1,2010,0,21000,0.1,0.1\n")),
                  io_error);
  CHECK_THROWS_AS(ingest::load_cities(tmp.file("c2.csv", header + "R1,2010,10,21000,1.2,0.1\n")),
                  io_error);
}

TEST_CASE("rater files load in order and reject bad tokens") {
  TempDir tmp;
  const auto good = tmp.file("r.csv", "variable,class\nPAX,POS\nSLOT,NEG\n");
  const auto rater = ingest::load_rater_file(good);
  REQUIRE(rater.size() == 2);
  CHECK(rater.entries()[0].first == "PAX");
  CHECK(rater.at("SLOT") == SignClass::SignificantNegative);

  const auto bad = tmp.file("bad.csv", "variable,class\nPAX,MAYBE\n");
  REQUIRE_THROWS_WITH(ingest::load_rater_file(bad), Catch::Matchers::ContainsSubstring("MAYBE"));

  const auto dup = tmp.file("dup.csv", "variable,class\nPAX,POS\nPAX,NEG\n");
  REQUIRE_THROWS_WITH(ingest::load_rater_file(dup),
                      Catch::Matchers::ContainsSubstring("duplicate variable"));
}

TEST_CASE("bundled benchmark rater has the expected sixteen variables") {
  const auto rater = ingest::load_rater_file(std::string(ROUTEENTRY_DATA_DIR) +
                                             "/raters/jetblue_ns.csv");
  CHECK(rater.size() == 16);
  CHECK(rater.at("SLOT") == SignClass::SignificantNegative);
  CHECK(rater.at("NETWEC") == SignClass::SignificantPositive);
}

TEST_CASE("published estimate tables mark dropped variables") {
  const auto table = ingest::load_published_estimates(std::string(ROUTEENTRY_DATA_DIR) +
                                                      "/published/azul_premerger.csv");
  CHECK(table.coefficients.size() == 32);
  std::size_t dropped = 0;
  for (const auto& c : table.coefficients) {
    if (!c.estimate) ++dropped;
  }
  CHECK(dropped == 1); // BANKR is not estimated pre-merger
}

TEST_CASE("carrier classes load and round-trip") {
  TempDir tmp;
  const auto path = tmp.file("carriers.csv", "carrier,class\nGOL,LCC_MAJOR\nLAT,FSC_MAJOR\n");
  const auto table = ingest::load_carriers(path);
  CHECK(table.at("GOL") == ingest::CarrierClass::LccMajor);
  CHECK_THROWS_AS(ingest::load_carriers(tmp.file("bad.csv", "carrier,class\nGOL,WEIRD\n")),
                  io_error);
}
