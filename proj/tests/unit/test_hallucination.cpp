#include <doctest.h>

#include "halluc/feasible.hpp"
#include "halluc/hallucination.hpp"
#include "harness.hpp"

using namespace halluc;

namespace {

Tensor pt(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::real({n}, std::move(v));
}

ForwardProblem first_coordinate(double eps) {
  ForwardProblem p;
  p.model = make_first_coordinate_model();
  p.noise.epsilon = eps;
  return p;
}

std::shared_ptr<const PairedDataset> smoke() {
  return std::make_shared<PairedDataset>(PairedDataset::from_model(
      {pt({0, 0}), pt({1, 0}), pt({0, 3})}, *make_first_coordinate_model(), {}, {"x1", "x2", "x3"}));
}

HallucinationQuery smoke_query(DecoderHandle decoder) {
  HallucinationQuery q;
  q.x = pt({0, 0});
  q.x_det = pt({0, 3});
  q.problem = first_coordinate(0.5);
  q.decoder = std::move(decoder);
  for (double e : {-0.4, -0.2, 0.0, 0.2, 0.4}) q.noise_samples.push_back(pt({e}));
  return q;
}

}  // namespace

TEST_CASE("consistency checks") {
  const ForwardProblem p = first_coordinate(0.5);
  CHECK(all_consistent(pt({2}), FiniteSet::singleton(pt({2, 9})), p));
  CHECK_FALSE(all_consistent(pt({2}), FiniteSet::singleton(pt({3, 0})), p));
  CHECK(check_consistency(pt({0}), FiniteSet({pt({0.49, 0}), pt({0.5, 0})}), p) == std::vector<bool>{true, false});
  CHECK_THROWS_AS(check_consistency(pt({0}), FiniteSet::singleton(pt({1, 2, 3})), p), ShapeError);

  // Tikhonov with small lambda on y = f x + e, ||e|| = eps / 2.
  oracle::Gen g(3);
  const Eigen::MatrixXd a = g.matrix(4, 7);
  ForwardProblem mp;
  mp.model = make_matrix_model(oracle::from_matrix(a));
  mp.noise.epsilon = 0.2;
  const Tensor x = g.vec(7);
  Tensor e = g.vec(4);
  e *= 0.1 / l2_norm(e);
  const Tensor y = mp.model->apply(x) + e;
  const Tensor z = make_tikhonov_decoder(mp.model, 1e-8)->decode(y, 1, 0)[0];
  CHECK(oracle::lq(oracle::from_vector(a * oracle::to_vector(z)), y, 2.0) < 0.2);
  CHECK(all_consistent(y, FiniteSet::singleton(z), mp));
}

TEST_CASE("invisibility check") {
  oracle::Gen g(4);
  const Eigen::MatrixXd a = g.matrix(3, 6);
  ForwardProblem p;
  p.model = make_matrix_model(oracle::from_matrix(a));
  p.noise.epsilon = 0.3;
  const Tensor x = g.vec(6);
  const Tensor kernel = nullspace_project(p.require_model(), g.vec(6), 1e-14, 5000).projected;
  const InvisibilityResult k = invisibility_check(x, kernel, p);
  CHECK(k.value < 1e-8);
  CHECK(k.passes);
  CHECK(k.bound == 0.6);

  // ||f x_det|| = 3 eps along the first right singular vector.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd v = svd.matrixV().col(0) * (0.9 / svd.singularValues()(0));
  const InvisibilityResult big = invisibility_check(x, oracle::from_vector(v), p);
  CHECK(big.value == doctest::Approx(0.9).epsilon(1e-10));
  CHECK_FALSE(big.passes);

  for (int t = 0; t < 20; ++t) {
    const Tensor d = g.vec(6);
    CHECK(invisibility_check(x, d, p).value ==
          doctest::Approx(oracle::lq(oracle::from_vector(a * oracle::to_vector(d)), Tensor({3}), 2.0)).epsilon(1e-10));
  }
}

TEST_CASE("eta interval: perfect transfer and identity stubs") {
  const HallucinationReport perfect = eta_interval(smoke_query({make_constant_decoder(pt({0, 3})), 1}));
  CHECK(perfect.eta_min == 0.0);
  CHECK(perfect.eta_max == 3.0);
  CHECK(perfect.det_norm == 3.0);
  CHECK(perfect.retained_V.size() == 5);
  CHECK(perfect.membership_found);
  CHECK(perfect.verdict == Verdict::kHallucinates);
  CHECK(perfect.invisibility.passes);
  CHECK_FALSE(perfect.invisibility_violation);
  CHECK(verify_detail_transfer(perfect, 1.5));
  CHECK_FALSE(verify_detail_transfer(perfect, 3.5));
  CHECK_THROWS_AS(verify_detail_transfer(perfect, 0.0), ContractError);

  const HallucinationReport ident = eta_interval(smoke_query({make_constant_decoder(pt({0, 0})), 1}));
  CHECK(ident.retained_V.empty());
  CHECK(ident.verdict == Verdict::kDoesNot);

  HallucinationQuery none = smoke_query({make_constant_decoder(pt({0, 3})), 1});
  none.noise_samples.clear();
  CHECK(eta_interval(none).verdict == Verdict::kInconclusive);

  HallucinationQuery outside = smoke_query({make_constant_decoder(pt({0, 3})), 1});
  outside.noise_samples.push_back(pt({0.5}));
  CHECK_THROWS_AS(eta_interval(outside), ContractError);
}

TEST_CASE("eta interval: nearest-feasible decoder on the smoke instance by hand") {
  // Every y = e with |e| < 0.5 has feasible set {x1, x3}; the nearest sample
  // in measurement space is x1 (ties broken by index), so phi = {x} always.
  const HallucinationQuery q = smoke_query({make_nearest_feasible_decoder(smoke(), NoiseBall{0.5}), 1});
  const HallucinationReport r = eta_interval(q);
  REQUIRE(r.per_sample.size() == 5);
  for (const SampleRecord& s : r.per_sample) {
    CHECK(s.consistent);
    CHECK(s.d_to_x == 0.0);
    CHECK(s.d_to_x_plus_det == 3.0);
    CHECK_FALSE(s.retained);
  }
  CHECK(r.verdict == Verdict::kDoesNot);

  // The feasible-mean decoder returns (0, 1.5): equidistant, never retained.
  const HallucinationReport m = eta_interval(smoke_query({make_feasible_mean_decoder(smoke(), NoiseBall{0.5}), 1}));
  for (const SampleRecord& s : m.per_sample) {
    CHECK(s.d_to_x == 1.5);
    CHECK(s.d_to_x_plus_det == 1.5);
  }
  CHECK(m.retained_V.empty());
}

TEST_CASE("eta interval matches a hand enumeration on random instances") {
  oracle::Gen g(91);
  for (int t = 0; t < 150; ++t) {
    const harness::EtaInstance in = harness::make_eta_instance(g);
    const HallucinationReport r = eta_interval(in.query());
    const harness::EtaOracle o = harness::eta_oracle(in);
    REQUIRE(r.per_sample.size() == o.d_to_x.size());
    for (std::size_t i = 0; i < o.d_to_x.size(); ++i) {
      CHECK(r.per_sample[i].d_to_x == doctest::Approx(o.d_to_x[i]).epsilon(1e-12));
      CHECK(r.per_sample[i].d_to_x_plus_det == doctest::Approx(o.d_to_target[i]).epsilon(1e-12));
      CHECK(r.per_sample[i].consistent == o.consistent[i]);
    }
    CHECK(r.retained_V == o.retained);
    CHECK(r.eta_min == doctest::Approx(o.eta_min).epsilon(1e-12));
    CHECK(r.eta_max == doctest::Approx(o.eta_max).epsilon(1e-12));
    CHECK(r.membership_found == o.membership_found);
    CHECK(r.invisibility.value == doctest::Approx(o.invisibility).epsilon(1e-12));

    std::vector<double> etas{g.uniform(1e-6, o.det_norm), o.eta_min, o.eta_max, o.det_norm / 2};
    for (double eta : etas) {
      if (!(eta > 0.0)) continue;
      const bool direct = o.transfers(eta);
      CHECK(verify_detail_transfer(r, eta) == direct);
      CHECK(direct == (r.membership_found && r.eta_min <= eta && eta <= r.eta_max));
    }
    if (in.single_valued() && r.membership_found) CHECK(r.eta_max <= r.det_norm);
  }
}

TEST_CASE("iff conditions agree with detail transfer under the hypotheses") {
  oracle::Gen g(92);
  int compared = 0, positive = 0;
  for (int t = 0; t < 120; ++t) {
    const harness::EtaInstance in = harness::make_eta_instance(g);
    if (!in.consistent_by_construction()) continue;
    const HallucinationQuery q = in.query();
    const HallucinationReport r = eta_interval(q);
    for (double eta : {g.uniform(1e-6, r.det_norm / 2), r.eta_min, r.eta_max, r.det_norm / 2}) {
      if (!(eta > 0.0) || eta > r.det_norm / 2) continue;
      const IffConditions c = check_iff_conditions(q, r, eta);
      CHECK(c.applicable);
      const bool transfer = verify_detail_transfer(r, eta);
      CHECK(transfer == (c.cond_i && c.cond_ii));
      ++compared;
      positive += transfer;
    }
  }
  CHECK(compared > 100);
  CHECK(positive > 5);

  const HallucinationQuery perfect = smoke_query({make_constant_decoder(pt({0, 3})), 1});
  CHECK_FALSE(check_iff_conditions(perfect, 1.8).applicable);
  const IffConditions c = check_iff_conditions(perfect, 1.0);
  CHECK(c.applicable);
  CHECK(c.cond_i);
  CHECK(c.cond_ii);
  CHECK(c.shifted_in_ball == 5);
}

TEST_CASE("positive verdicts from consistent decoders obey the 2 eps law") {
  oracle::Gen g(93);
  int positives = 0;
  for (int t = 0; t < 200; ++t) {
    const harness::EtaInstance in = harness::make_eta_instance(g);
    const HallucinationReport r = eta_interval(in.query());
    CHECK_FALSE(r.invisibility_violation);
    if (r.verdict == Verdict::kHallucinates) {
      ++positives;
      CHECK(r.invisibility.value <= 2.0 * in.epsilon);
    }
  }
  CHECK(positives > 10);
}

TEST_CASE("error versus a trusted diameter") {
  const ForwardProblem p = first_coordinate(0.5);
  const SeminormSpec l2 = SeminormSpec::lq(2);
  // Singleton feasible set: the consistent realistic answer is x itself.
  const ErrorDiameterResult exact = error_vs_diameter(pt({0, 0}), pt({0}), FiniteSet::singleton(pt({0, 0})), 0.0, p, l2);
  CHECK(exact.error == 0.0);
  CHECK(exact.branch == ErrorBranch::kNone);
  CHECK(error_vs_diameter(pt({0, 0}), pt({0}), FiniteSet::singleton(pt({0, 1})), 3.0, p, l2).branch ==
        ErrorBranch::kNone);
  CHECK(error_vs_diameter(pt({0, 0}), pt({0}), FiniteSet::singleton(pt({7, 0})), 3.0, p, l2).branch ==
        ErrorBranch::kInconsistent);
  auto in_m1 = [](const Tensor& z) { return z.value(1).real() == 0.0 || z.value(1).real() == 3.0; };
  CHECK(error_vs_diameter(pt({0, 0}), pt({0}), FiniteSet::singleton(pt({0, 5})), 3.0, p, l2, in_m1).branch ==
        ErrorBranch::kUnrealistic);
  CHECK(error_vs_diameter(pt({0, 0}), pt({0}), FiniteSet::singleton(pt({0, 5})), 3.0, p, l2).branch ==
        ErrorBranch::kUnrealistic);
  CHECK(error_vs_diameter(pt({0, 0}), pt({0}), FiniteSet::singleton(pt({0, 3})), 1.0, p, l2, in_m1).branch ==
        ErrorBranch::kContradiction);
}

TEST_CASE("certificate and exhaustive decoders on a four-point set") {
  const Certificate yes = no_large_hallucination_certificate(1.0, 2.0);
  CHECK(yes.issued);
  CHECK(yes.lower_bound_caveat);
  CHECK(yes.statement.find("lower bound") != std::string::npos);
  CHECK_FALSE(no_large_hallucination_certificate(1.0, 1.0).issued);
  CHECK_THROWS_AS(no_large_hallucination_certificate(1.0, 0.0), ContractError);

  // M1 = {(0,0), (0,1), (2,0), (2,3)} with f = first coordinate, eps = 0.5.
  // Feasible sets are {a, b} and {c, d}; kersize = 3. Every consistent
  // realistic single-valued decoder picks one member per group; enumerate all
  // of them and every detail between members.
  const std::vector<Tensor> m1{pt({0, 0}), pt({0, 1}), pt({2, 0}), pt({2, 3})};
  const PairedDataset probes = PairedDataset::from_model(m1, *make_first_coordinate_model(), {pt({0}), pt({2})});
  const double ks = analyze(probes, NoiseBall{0.5}, SeminormSpec::lq(2)).kersize;
  CHECK(ks == 3.0);
  double largest = 0.0;
  for (int pick0 = 0; pick0 < 2; ++pick0) {
    for (int pick2 = 2; pick2 < 4; ++pick2) {
      const Tensor z0 = m1[pick0], z2 = m1[pick2];
      const DecoderPtr dec = make_function_decoder("pick", [z0, z2](const Tensor& y, std::size_t, std::uint64_t) {
        return std::vector<Tensor>{y.value(0).real() < 1.0 ? z0 : z2};
      });
      for (const Tensor& x : m1) {
        for (const Tensor& t : m1) {
          if (x.identical(t)) continue;
          HallucinationQuery q;
          q.x = x;
          q.x_det = t - x;
          q.problem = first_coordinate(0.5);
          q.decoder = {dec, 1};
          q.noise_samples = {pt({-0.25}), pt({0.0}), pt({0.25})};
          const HallucinationReport r = eta_interval(q);
          if (r.verdict == Verdict::kHallucinates) largest = std::max(largest, r.eta_max);
        }
      }
    }
  }
  CHECK(largest > 0.0);
  CHECK(largest <= ks);
  CHECK_FALSE(no_large_hallucination_certificate(ks, largest).issued);
}

TEST_CASE("inevitability check and worst-case error bound") {
  const ForwardProblem p = first_coordinate(0.5);
  const SeminormSpec l2 = SeminormSpec::lq(2);
  const auto grid = eta_grid(3.0);
  CHECK(grid.size() == 32);
  CHECK(grid.front() == doctest::Approx(1.5e-3));
  CHECK(grid.back() == 1.5);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);

  const InevitabilityReport single =
      inevitability_check(pt({0}), 3.0, {make_nearest_feasible_decoder(smoke(), NoiseBall{0.5}), 1}, p, {}, l2);
  CHECK(single.decoder_consistent);
  CHECK(single.recon_diameter == 0.0);
  CHECK(single.lower_bound == 1.5);
  for (const InevitabilityRow& row : single.grid) CHECK(row.branch_ii);
  CHECK(single.firing_branch == "ii");

  const InevitabilityReport constant = inevitability_check(pt({0}), 3.0, {make_constant_decoder(pt({9, 9})), 1}, p,
                                                           {pt({0.3}), pt({-0.3})}, l2);
  REQUIRE(constant.stability_sup);
  CHECK(*constant.stability_sup == 0.0);
  CHECK_FALSE(constant.decoder_consistent);
  CHECK(constant.firing_branch == "i");

  // Feasible mean on {(0,0), (0,3)} attains diam / 2 exactly.
  const FiniteSet feasible({pt({0, 0}), pt({0, 3})});
  const FiniteSet mean = make_feasible_mean_decoder(smoke(), NoiseBall{0.5})->decode(pt({0}), 1, 0);
  CHECK(worst_case_error(feasible, mean, l2) == 1.5);
  for (const Tensor& z : {pt({0, 0}), pt({0, 3}), pt({5, -1}), pt({0, 1.4})})
    CHECK(worst_case_error(feasible, FiniteSet::singleton(z), l2) >= 1.5);
}
