#include "routeentry/agreement.hpp"
#include "routeentry/ingest.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace routeentry;

namespace {

const std::string data_dir = ROUTEENTRY_DATA_DIR;

Rater premerger_rater(double alpha = 0.10) {
  return agreement::classify_published(
      ingest::load_published_estimates(data_dir + "/published/azul_premerger.csv"), alpha);
}

Rater postmerger_rater(double alpha = 0.10) {
  return agreement::classify_published(
      ingest::load_published_estimates(data_dir + "/published/azul_postmerger.csv"), alpha);
}

Rater make_rater(const std::string& name, const std::vector<SignClass>& classes) {
  Rater r(name);
  for (std::size_t i = 0; i < classes.size(); ++i) r.add("v" + std::to_string(i), classes[i]);
  return r;
}

constexpr SignClass NEG = SignClass::SignificantNegative;
constexpr SignClass NS = SignClass::NotSignificant;
constexpr SignClass POS = SignClass::SignificantPositive;

} // namespace

TEST_CASE("coefficient classification by sign and strict significance") {
  CHECK(agreement::classify_estimate(0.0474, 0.03, 0.10) == POS);
  CHECK(agreement::classify_estimate(-0.0008, 0.5, 0.10) == NS);
  CHECK(agreement::classify_estimate(-1.3, 0.001, 0.10) == NEG);
  CHECK(agreement::classify_estimate(2.0, 0.10, 0.10) == NS); // p == alpha stays insignificant
  CHECK(agreement::classify_estimate(0.0, 0.001, 0.10) == NS);
}

TEST_CASE("classification of a fit is deterministic") {
  estimators::FitResult fit;
  fit.name = "demo";
  fit.converged = true;
  fit.coefficients = {{"A", 0.5, 0.1, 5.0, 0.001}, {"B", -0.2, 0.3, -0.66, 0.5}};
  const auto r1 = agreement::classify_coefficients(fit, 0.10);
  const auto r2 = agreement::classify_coefficients(fit, 0.10);
  REQUIRE(r1.entries() == r2.entries());
  CHECK(r1.at("A") == POS);
  CHECK(r1.at("B") == NS);
  fit.converged = false;
  CHECK_THROWS_AS(agreement::classify_coefficients(fit, 0.10), numeric_error);
}

TEST_CASE("aligning the bundled pre/post-merger raters keeps 31 shared variables") {
  const auto a = premerger_rater();
  const auto b = postmerger_rater();
  CHECK(a.size() == 31); // BANKR dropped from the pre-merger table
  CHECK(b.size() == 32);
  const auto aligned = agreement::align_raters(a, b);
  CHECK(aligned.pairs.size() == 31);
  CHECK(aligned.excluded_a.empty());
  REQUIRE(aligned.excluded_b.size() == 1);
  CHECK(aligned.excluded_b[0] == "BANKR");
}

TEST_CASE("identical raters align fully and agree everywhere") {
  const auto a = premerger_rater();
  const auto aligned = agreement::align_raters(a, a);
  CHECK(aligned.pairs.size() == a.size());
  for (const auto& [ca, cb] : aligned.pairs) REQUIRE(ca == cb);
  const auto kappa = agreement::cohen_kappa(aligned);
  CHECK(kappa.po == 1.0);
  CHECK(kappa.defined);
  CHECK(kappa.kappa == Catch::Approx(1.0));
}

TEST_CASE("disjoint raters cannot be aligned") {
  Rater a("a"), b("b");
  a.add("X", POS);
  b.add("Y", NEG);
  CHECK_THROWS_AS(agreement::align_raters(a, b), io_error);
}

TEST_CASE("kappa hand example") {
  const auto a = make_rater("a", {POS, POS, NS, NEG});
  const auto b = make_rater("b", {POS, NS, NS, NEG});
  const auto aligned = agreement::align_raters(a, b);
  const auto k = agreement::cohen_kappa(aligned);
  CHECK(k.po == Catch::Approx(0.75));
  CHECK(k.pe == Catch::Approx(5.0 / 16.0));
  CHECK(k.kappa == Catch::Approx(7.0 / 11.0).epsilon(1e-12));
}

TEST_CASE("kappa on the bundled pre/post-merger tables") {
  const auto aligned = agreement::align_raters(premerger_rater(), postmerger_rater());
  const auto k = agreement::cohen_kappa(aligned);
  CHECK(k.n == 31);
  CHECK(k.po == Catch::Approx(12.0 / 31.0).epsilon(1e-14));
  CHECK(k.pe == Catch::Approx(322.0 / 961.0).epsilon(1e-14));
  CHECK(k.kappa == Catch::Approx(50.0 / 639.0).epsilon(1e-12));
  // the published chance agreement (33.0%) and kappa (0.0854) sit close by;
  // the recomputed marginals land inside the documented windows
  CHECK(k.pe >= 0.325);
  CHECK(k.pe <= 0.340);
  CHECK(k.kappa >= 0.075);
  CHECK(k.kappa <= 0.090);
  CHECK(agreement::landis_koch_label(k.kappa) == agreement::AgreementStrength::Slight);

  // contingency cells account for every shared variable
  std::size_t total = 0;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) total += k.contingency[r][c];
  }
  CHECK(total == 31);
}

TEST_CASE("constant equal raters make kappa undefined, signaled distinctly") {
  const auto a = make_rater("a", {POS, POS, POS});
  const auto aligned = agreement::align_raters(a, a);
  const auto k = agreement::cohen_kappa(aligned);
  CHECK(k.pe == 1.0);
  CHECK_FALSE(k.defined);
}

TEST_CASE("kappa symmetry and common-relabel invariance") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> pick(0, 2);
  const SignClass classes[] = {NEG, NS, POS};
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<SignClass> ca(40), cb(40);
    for (int i = 0; i < 40; ++i) {
      ca[i] = classes[pick(rng)];
      cb[i] = classes[pick(rng)];
    }
    const auto a = make_rater("a", ca);
    const auto b = make_rater("b", cb);
    const auto kab = agreement::cohen_kappa(agreement::align_raters(a, b));
    const auto kba = agreement::cohen_kappa(agreement::align_raters(b, a));
    REQUIRE(kab.defined == kba.defined);
    if (kab.defined) REQUIRE(kab.kappa == Catch::Approx(kba.kappa).epsilon(1e-14));

    // cyclic relabeling applied to both raters leaves kappa unchanged
    const auto cycle = [&](SignClass c) {
      return c == NEG ? NS : (c == NS ? POS : NEG);
    };
    std::vector<SignClass> pa(40), pb(40);
    for (int i = 0; i < 40; ++i) {
      pa[i] = cycle(ca[i]);
      pb[i] = cycle(cb[i]);
    }
    const auto kp = agreement::cohen_kappa(
        agreement::align_raters(make_rater("pa", pa), make_rater("pb", pb)));
    if (kab.defined) REQUIRE(kp.kappa == Catch::Approx(kab.kappa).epsilon(1e-14));
  }
}

TEST_CASE("appending an agreeing item never lowers observed agreement") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pick(0, 2);
  const SignClass classes[] = {NEG, NS, POS};
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<SignClass> ca(10), cb(10);
    for (int i = 0; i < 10; ++i) {
      ca[i] = classes[pick(rng)];
      cb[i] = classes[pick(rng)];
    }
    const double before =
        agreement::cohen_kappa(agreement::align_raters(make_rater("a", ca), make_rater("b", cb)))
            .po;
    ca.push_back(POS);
    cb.push_back(POS);
    const double after =
        agreement::cohen_kappa(agreement::align_raters(make_rater("a", ca), make_rater("b", cb)))
            .po;
    REQUIRE(after >= before);
  }
}

TEST_CASE("bootstrap standard errors are deterministic and thread independent") {
  const auto aligned = agreement::align_raters(premerger_rater(), postmerger_rater());
  const auto b1 = agreement::kappa_bootstrap(aligned, 500, 42, 1);
  const auto b2 = agreement::kappa_bootstrap(aligned, 500, 42, 1);
  const auto b4 = agreement::kappa_bootstrap(aligned, 500, 42, 4);
  CHECK(b1.se == b2.se); // bitwise
  CHECK(b1.se == b4.se); // independent of worker count
  const auto other_seed = agreement::kappa_bootstrap(aligned, 500, 43, 1);
  CHECK(b1.se != other_seed.se);
}

TEST_CASE("bootstrap on the bundled tables lands in the documented band") {
  const auto aligned = agreement::align_raters(premerger_rater(), postmerger_rater());
  const auto boot = agreement::kappa_bootstrap(aligned, 2000, 20080101, 1);
  CHECK(boot.se >= 0.08);
  CHECK(boot.se <= 0.17);
  CHECK(boot.dropped == 0);
  CHECK_FALSE(boot.unreliable);
  // the analytic null standard error sits in the same region
  const double analytic = agreement::kappa_se_analytic(aligned);
  CHECK(analytic > 0.05);
  CHECK(analytic < 0.20);
}

TEST_CASE("identical raters bootstrap to a zero standard error") {
  const auto a = premerger_rater();
  const auto aligned = agreement::align_raters(a, a);
  const auto boot = agreement::kappa_bootstrap(aligned, 200, 5, 1);
  CHECK(boot.se == 0.0);
  CHECK(boot.p == 0.0); // below any floor: kappa is exactly one
  CHECK(std::isinf(boot.z));
}

TEST_CASE("independent raters with matched marginals center replicate kappa at zero") {
  std::mt19937_64 rng(31337);
  std::discrete_distribution<int> pick({0.3, 0.4, 0.3});
  const SignClass classes[] = {NEG, NS, POS};
  double sum = 0.0;
  const int sims = 300;
  for (int s = 0; s < sims; ++s) {
    std::vector<SignClass> ca(1000), cb(1000);
    for (int i = 0; i < 1000; ++i) {
      ca[i] = classes[pick(rng)];
      cb[i] = classes[pick(rng)];
    }
    const auto k =
        agreement::cohen_kappa(agreement::align_raters(make_rater("a", ca), make_rater("b", cb)));
    sum += k.kappa;
  }
  CHECK(std::abs(sum / sims) < 0.02);
}

TEST_CASE("agreement strength labels") {
  using agreement::AgreementStrength;
  CHECK(agreement::landis_koch_label(0.0854) == AgreementStrength::Slight);
  CHECK(agreement::landis_koch_label(0.518) == AgreementStrength::Moderate);
  CHECK(agreement::landis_koch_label(0.375) == AgreementStrength::Fair);
  CHECK(agreement::landis_koch_label(-0.3) == AgreementStrength::Poor);
  CHECK(agreement::landis_koch_label(-0.202) == AgreementStrength::Poor);
  CHECK(agreement::landis_koch_label(1.0) == AgreementStrength::AlmostPerfect);
  CHECK(agreement::landis_koch_label(0.81) == AgreementStrength::AlmostPerfect);
  CHECK(agreement::landis_koch_label(0.0) == AgreementStrength::Slight);
  // two-decimal rounding bridges the published scale's gap between 0.20 and 0.21
  CHECK(agreement::landis_koch_label(0.204) == AgreementStrength::Slight);
  CHECK(agreement::landis_koch_label(0.206) == AgreementStrength::Fair);
  CHECK_THROWS_AS(agreement::landis_koch_label(1.5), std::invalid_argument);
}

TEST_CASE("agreement matrix assigns every shared variable to one cell") {
  const auto a = premerger_rater();
  const auto b = postmerger_rater();
  const auto aligned = agreement::align_raters(a, b);
  const auto m = agreement::agreement_matrix(aligned);

  std::size_t total = 0;
  std::vector<std::string> diagonal;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      total += m[r][c].size();
      if (r == c) diagonal.insert(diagonal.end(), m[r][c].begin(), m[r][c].end());
    }
  }
  CHECK(total == 31);
  CHECK(diagonal.size() == 12);
  for (const auto* name : {"PAX", "NETWEC", "ZERAZCIT", "AZSHCON", "LCCMAJ", "LCCCOMP",
                           "REGSMA", "NEW"}) {
    INFO(name);
    CHECK(std::find(diagonal.begin(), diagonal.end(), name) != diagonal.end());
  }

  // identical raters leave the off-diagonal empty
  const auto self = agreement::agreement_matrix(agreement::align_raters(a, a));
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (r != c) REQUIRE(self[r][c].empty());
    }
  }
}

TEST_CASE("kappa report serializes the full result") {
  const auto report =
      agreement::kappa_report(premerger_rater(), postmerger_rater(), 500, 99, 1);
  const auto j = agreement::kappa_report_json(report);
  CHECK(j.at("n").get<int>() == 31);
  CHECK(j.at("po").get<double>() == Catch::Approx(12.0 / 31.0));
  CHECK(j.at("label").get<std::string>() == "slight");
  CHECK(j.at("kappa_defined").get<bool>());
  CHECK(j.at("contingency").size() == 3);
}

TEST_CASE("benchmark raters against the bundled azul tables") {
  // pre-merger comparable-spec estimates against the JetBlue benchmark at
  // alpha = 0.05: published matrices classify starred-at-10% as insignificant
  const auto az_bef = agreement::classify_published(
      ingest::load_published_estimates(data_dir + "/published/azul_premerger_jetblue_like.csv"),
      0.05);
  const auto jb = ingest::load_rater_file(data_dir + "/raters/jetblue_ns.csv");
  const auto aligned = agreement::align_raters(jb, az_bef);
  CHECK(aligned.pairs.size() == 16);
  const auto k = agreement::cohen_kappa(aligned);
  // 11 of 16 agreements; the published grid reports this cell as 0.518
  CHECK(k.po == Catch::Approx(11.0 / 16.0));
  CHECK(k.pe == Catch::Approx(90.0 / 256.0));
  CHECK(k.kappa == Catch::Approx(0.518).margin(0.0005));
  CHECK(agreement::landis_koch_label(k.kappa) == agreement::AgreementStrength::Moderate);

  // the post-merger counterpart decays to slight-at-best agreement
  const auto az_aft = agreement::classify_published(
      ingest::load_published_estimates(data_dir + "/published/azul_postmerger_jetblue_like.csv"),
      0.05);
  const auto k_aft = agreement::cohen_kappa(agreement::align_raters(jb, az_aft));
  CHECK(k_aft.kappa < 0.1);
}
