#include <doctest.h>

#include <sstream>

#include "halluc/htk.hpp"
#include "halluc/seminorm.hpp"
#include "oracles.hpp"

using namespace halluc;

TEST_CASE("tensor arithmetic and stacking") {
  const Tensor a = Tensor::real({2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::real({2, 2}, {4, 3, 2, 1});
  CHECK((a + b).identical(Tensor::real({2, 2}, {5, 5, 5, 5})));
  CHECK((a - a).identical(Tensor::zeros_like(a)));
  CHECK(inner(a, b).real() == doctest::Approx(20.0));
  CHECK(l2_norm(a) == doctest::Approx(std::sqrt(30.0)));
  const std::vector<Tensor> items{a, b};
  const Tensor s = stack(items);
  CHECK(s.shape() == Shape{2, 2, 2});
  const auto back = unstack(s);
  CHECK(back[0].identical(a));
  CHECK(back[1].identical(b));
  CHECK_THROWS_AS(require_same_shape(a, Tensor({3}), "test"), ShapeError);
  CHECK_THROWS_AS(Tensor::real({2}, {1.0, NAN}).require_finite(), ContractError);
}

TEST_CASE("HTK1 round trip is bit-exact for real and complex tensors") {
  oracle::Gen g(7);
  const Tensor r = g.image(3, 5);
  CHECK(htk::from_bytes(htk::to_bytes(r)).identical(r));
  std::vector<Complex> cv{{1.5, -2.0}, {0.0, 1e-300}, {-3.25, 7.0}};
  const Tensor c = Tensor::complex({3}, cv);
  CHECK(htk::from_bytes(htk::to_bytes(c)).identical(c));
  std::string bytes = htk::to_bytes(r);
  CHECK_THROWS_AS(htk::from_bytes(bytes.substr(0, bytes.size() - 1)), ParseError);
  CHECK_THROWS_AS(htk::from_bytes("HTK2" + bytes.substr(4)), ParseError);
  CHECK_THROWS_AS(htk::from_bytes(bytes + "x"), ParseError);
}

TEST_CASE("ROI seminorm examples") {
  const Tensor a = Tensor::real({2}, {3, 4});
  CHECK(roi_seminorm(a, a, SeminormSpec::lq(2)) == 0.0);
  SeminormSpec one_region = SeminormSpec::with_regions(1, 2, RegionSet({Box{{0}, {2}}}));
  CHECK(roi_seminorm(a, Tensor({2}), one_region) == doctest::Approx(5.0));

  const Tensor d = Tensor::real({3}, {1, -2, 3});
  SeminormSpec split = SeminormSpec::with_regions(1, 1, RegionSet({Box{{0}, {1}}, Box{{1}, {3}}}));
  CHECK(roi_seminorm(d, split) == doctest::Approx(6.0));

  CHECK(roi_seminorm(d, SeminormSpec::lq(kInf)) == 3.0);
  CHECK(roi_seminorm(d, SeminormSpec::lq(1, true)) == doctest::Approx(2.0));
  const Tensor c = Tensor::complex({1}, {Complex(3, 4)});
  CHECK(roi_seminorm(c, SeminormSpec::lq(1)) == doctest::Approx(5.0));
}

TEST_CASE("seminorm matches the plain l_q oracle on random tensors") {
  oracle::Gen g(11);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = g.index(1, 12);
    const Tensor a = g.vec(n), b = g.vec(n);
    for (double q : {1.0, 2.0, 3.0, kInf}) {
      CHECK(roi_seminorm(a, b, SeminormSpec::lq(q)) == doctest::Approx(oracle::lq(a, b, q)).epsilon(1e-12));
    }
  }
}

TEST_CASE("seminorm contracts") {
  CHECK_THROWS_AS(SeminormSpec::lq(0.5).validate(), ContractError);
  CHECK_THROWS_AS(RegionSet({}), ContractError);
  SeminormSpec partial = SeminormSpec::with_regions(2, 2, RegionSet({Box{{0}, {1}}}));
  CHECK_FALSE(partial.is_norm_on({3}));
  CHECK(SeminormSpec::lq(2).is_norm_on({3}));
  CHECK_THROWS_AS(roi_seminorm(Tensor({2}), Tensor({3}), SeminormSpec::lq(2)), ShapeError);
  SeminormSpec out_of_range = SeminormSpec::with_regions(2, 2, RegionSet({Box{{0}, {4}}}));
  CHECK_THROWS_AS(roi_seminorm(Tensor({3}), out_of_range), ShapeError);
}

TEST_CASE("Hausdorff and point-to-set examples") {
  auto s = [](double v) { return Tensor::real({1}, {v}); };
  const SeminormSpec l1 = SeminormSpec::lq(1);
  const FiniteSet x = FiniteSet::singleton(s(1.5));
  CHECK(hausdorff(x, x, l1) == 0.0);
  CHECK(hausdorff(FiniteSet::singleton(s(0)), FiniteSet({s(-1), s(2)}), l1) == 2.0);
  CHECK(hausdorff(FiniteSet({s(0), s(10)}), FiniteSet::singleton(s(0)), l1) == 10.0);
  CHECK(point_to_set(s(0), FiniteSet({s(1), s(-3)}), l1) == 3.0);
  CHECK(point_to_set_min(s(0), FiniteSet({s(1), s(-3)}), l1) == 1.0);
  CHECK(point_to_set(s(4), x, l1) == 2.5);
  CHECK(set_diameter(FiniteSet({s(1), s(-3), s(0)}), l1) == 4.0);
}

TEST_CASE("point_to_set coincides with hausdorff of a singleton") {
  oracle::Gen g(3);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = g.index(1, 6), m = g.index(1, 5);
    std::vector<Tensor> b;
    for (std::size_t i = 0; i < m; ++i) b.push_back(g.vec(n));
    const Tensor x = g.vec(n);
    const FiniteSet bs(b);
    CHECK(point_to_set(x, bs, SeminormSpec::lq(2)) == hausdorff(FiniteSet::singleton(x), bs, SeminormSpec::lq(2)));
  }
}
