#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>

#include "ginv/instrumentation.hpp"
#include "ginv/invariant_features.hpp"
#include "oracles.hpp"

using namespace ginv;

namespace {

using SetPtr = std::shared_ptr<const OrthogonalSet>;
SetPtr share(OrthogonalSet s) { return std::make_shared<const OrthogonalSet>(std::move(s)); }

Vector unit(std::mt19937_64& rng, std::size_t d)
{
    std::normal_distribution<double> n;
    Vector v(static_cast<Eigen::Index>(d));
    for (auto& e : v)
        e = n(rng);
    return v.normalized();
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Pooled values of one projection list, written from the definitions.
oracle::Vec pool_oracle(const oracle::Vec& a, const PoolingSpec& p)
{
    const double n = static_cast<double>(a.size());
    switch (p.mode) {
    case PoolingSpec::Mode::mean: {
        double s = 0;
        for (double v : a)
            s += v;
        return {p.scale * s / n};
    }
    case PoolingSpec::Mode::max:
        return {p.scale * *std::max_element(a.begin(), a.end())};
    case PoolingSpec::Mode::moment: {
        oracle::Vec out;
        for (int j = 1; j <= p.order; ++j) {
            double s = 0;
            for (double v : a)
                s += std::pow(v, j);
            out.push_back(p.scale * s / n);
        }
        return out;
    }
    case PoolingSpec::Mode::cdf: {
        oracle::Vec out;
        for (int j = 1; j <= p.bins; ++j) {
            const double b = -1.0 + (2.0 * j - 1.0) / p.bins;
            double s = 0;
            for (double v : a)
                s += sigmoid((v - b) / p.smoothing);
            out.push_back(p.scale * s / n);
        }
        return out;
    }
    }
    return {};
}

std::vector<PoolingSpec> all_poolings()
{
    return {PoolingSpec::mean(), PoolingSpec::max(), PoolingSpec::moment(3), PoolingSpec::cdf(5, 0.2),
            PoolingSpec::mean(0.5)};
}

} // namespace

TEST_CASE("PoolingSpec grammar, outputs and Lipschitz constants")
{
    CHECK(PoolingSpec::parse("mean").outputs() == 1);
    CHECK(PoolingSpec::parse("moment:n=4").outputs() == 4);
    CHECK(PoolingSpec::parse("cdf:bins=6,s=0.1").outputs() == 6);
    CHECK(PoolingSpec::parse("moment:n=2,scale=0.1").lipschitz() == doctest::Approx(0.2));
    CHECK(PoolingSpec::parse("cdf:bins=4,s=0.5").lipschitz() == doctest::Approx(0.5));
    CHECK(PoolingSpec::parse("max").lipschitz() == 1.0);
    CHECK(PoolingSpec::parse(PoolingSpec::cdf(3, 0.25, 0.5).to_string()).to_string() ==
          PoolingSpec::cdf(3, 0.25, 0.5).to_string());
    CHECK(PoolingSpec::mean(1.0 / std::sqrt(2.0)).stability_compliant());
    CHECK_FALSE(PoolingSpec::mean().stability_compliant());
    CHECK(PoolingSpec::moment(2).required_lipschitz() == doctest::Approx(1.0 / (2.0 * std::sqrt(2.0))));
    CHECK_THROWS_AS(PoolingSpec::parse("median"), std::invalid_argument);
    CHECK_THROWS_AS(PoolingSpec::parse("moment:n=0"), std::invalid_argument);
    CHECK_THROWS_AS(PoolingSpec::parse("cdf:bins=3,s=-1"), std::invalid_argument);
    CHECK_THROWS_AS(PoolingSpec::parse("mean:n=2"), std::invalid_argument);
}

TEST_CASE("pool matches the definition oracle")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    for (const PoolingSpec& p : all_poolings()) {
        std::vector<double> a(7);
        for (double& v : a)
            v = u(rng);
        std::vector<double> got(p.outputs());
        p.pool(a, got);
        const auto want = pool_oracle(a, p);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(std::abs(got[i] - want[i]) <= 1e-14);
    }
}

TEST_CASE("linear_signature examples")
{
    std::mt19937_64 rng(8);
    const Matrix T = random_templates(3, 4, 1);
    const Vector x = unit(rng, 3);
    const auto id = sample_orthogonal_set(3, 1, 0, SampleOptions{true});
    const PooledSignature s = linear_signature(x, id, T, PoolingSpec::mean());
    for (Eigen::Index k = 0; k < 4; ++k)
        CHECK(std::abs(s.values(k, 0) - x.dot(T.col(k))) <= 1e-15);

    const auto p2 = make_exact_group(groups::Permutations{2});
    Matrix t(2, 1);
    t << 1, 0;
    Vector v(2), w(2);
    v << 0.6, 0.8;
    w << 0.8, 0.6;
    CHECK(linear_signature(v, p2, t, PoolingSpec::max()).values(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(linear_signature(w, p2, t, PoolingSpec::max()).values(0, 0) == doctest::Approx(0.8).epsilon(1e-15));

    CHECK_THROWS_AS(linear_signature(2.0 * v, p2, t, PoolingSpec::max()), std::invalid_argument);
    CHECK_THROWS_AS(linear_signature(v, p2, 2.0 * t, PoolingSpec::max()), std::invalid_argument);
}

TEST_CASE("linear_signature enumerates the orbit")
{
    std::mt19937_64 rng(18);
    const auto s = make_exact_group(groups::SignedPermutations{3});
    const Matrix T = random_templates(3, 3, 4);
    for (int t = 0; t < 10; ++t) {
        const Vector x = unit(rng, 3);
        for (const PoolingSpec& p : all_poolings()) {
            const PooledSignature sig = linear_signature(x, s, T, p);
            for (Eigen::Index k = 0; k < 3; ++k) {
                oracle::Vec proj;
                for (const Matrix& g : s.elements())
                    proj.push_back(oracle::dot(oracle::to_vec(x),
                                               oracle::matvec(oracle::to_mat(g), oracle::to_vec(T.col(k)))));
                const auto want = pool_oracle(proj, p);
                for (std::size_t n = 0; n < want.size(); ++n)
                    CHECK(std::abs(sig.values(k, static_cast<Eigen::Index>(n)) - want[n]) <= 1e-13);
            }
        }
    }
}

TEST_CASE("kernel_signature examples")
{
    std::mt19937_64 rng(9);
    const Matrix T = random_templates(4, 3, 2);
    const auto id = share(sample_orthogonal_set(4, 1, 0, SampleOptions{true}));
    const TemplateBank single(T, id, KernelSpec::rbf(1.0));
    const Vector x = unit(rng, 4);
    const PooledSignature s = kernel_signature(x, single, PoolingSpec::mean());
    for (Eigen::Index k = 0; k < 3; ++k)
        CHECK(std::abs(s.values(k, 0) - kernel_eval(KernelSpec::rbf(1.0), x, T.col(k))) <= 1e-15);

    const auto c = share(make_exact_group(groups::CyclicRotation{4, 1, 3, 6}));
    const TemplateBank lin(T, c, KernelSpec::linear());
    for (int t = 0; t < 20; ++t) {
        const Vector y = unit(rng, 4);
        for (const PoolingSpec& p : all_poolings())
            CHECK(max_abs(kernel_signature(y, lin, p).values - linear_signature(y, *c, T, p).values) <= 1e-12);
    }
}

TEST_CASE("kernel_signature normalizes projections of non-normalized kernels")
{
    std::mt19937_64 rng(10);
    const auto s = share(make_exact_group(groups::Permutations{3}));
    const Matrix T = random_templates(3, 2, 6);
    const TemplateBank poly(T, s, KernelSpec::polynomial(2, 1.0));
    const Vector x = unit(rng, 3);
    const PooledSignature sig = kernel_signature(x, poly, PoolingSpec::mean());
    for (Eigen::Index k = 0; k < 2; ++k) {
        double acc = 0;
        for (const Matrix& g : s->elements()) {
            const auto gt = oracle::matvec(oracle::to_mat(g), oracle::to_vec(T.col(k)));
            const auto xv = oracle::to_vec(x);
            acc += oracle::k_poly(xv, gt, 2, 1.0) /
                   std::sqrt(oracle::k_poly(xv, xv, 2, 1.0) * oracle::k_poly(gt, gt, 2, 1.0));
        }
        CHECK(std::abs(sig.values(k, 0) - acc / 6.0) <= 1e-14);
    }
}

TEST_CASE("kernel_signature invariance on exact groups, samples untouched")
{
    std::mt19937_64 rng(11);
    for (const auto& s : {share(make_exact_group(groups::SignedPermutations{3})),
                          share(make_exact_group(groups::CyclicRotation{3, 0, 1, 8}))}) {
        const TemplateBank bank(random_templates(3, 5, 3), s, KernelSpec::rbf(1.0));
        for (int t = 0; t < 20; ++t) {
            const Vector x = unit(rng, 3);
            for (const PoolingSpec& p : all_poolings()) {
                const auto before = instrumentation::snapshot();
                const Matrix base = kernel_signature(x, bank, p).values;
                CHECK(instrumentation::snapshot().sample_transforms == before.sample_transforms);
                for (std::size_t g = 0; g < s->size(); ++g)
                    CHECK(max_abs(kernel_signature(s->apply(g, x), bank, p).values - base) <= 1e-8);
            }
        }
    }
}

TEST_CASE("pooling-mode sanity")
{
    std::mt19937_64 rng(12);
    const auto s = share(make_exact_group(groups::Permutations{3}));
    const TemplateBank bank(random_templates(3, 6, 7), s, KernelSpec::rbf(1.0));
    for (int t = 0; t < 30; ++t) {
        const Vector x = unit(rng, 3);
        // rbf projections are positive.
        CHECK((kernel_signature(x, bank, PoolingSpec::mean()).values.array() <=
               kernel_signature(x, bank, PoolingSpec::max()).values.array())
                  .all());
        const Matrix cdf = kernel_signature(x, bank, PoolingSpec::cdf(6, 0.1)).values;
        CHECK((cdf.array() >= 0.0).all());
        CHECK((cdf.array() <= 1.0).all());
        for (Eigen::Index k = 0; k < cdf.rows(); ++k)
            for (Eigen::Index n = 1; n < cdf.cols(); ++n)
                CHECK(cdf(k, n) <= cdf(k, n - 1));
    }
}

TEST_CASE("partial_signature examples")
{
    std::mt19937_64 rng(13);
    const auto full = share(make_exact_group(groups::Permutations{3}));
    const TemplateBank bank(random_templates(3, 4, 5), full, KernelSpec::rbf(1.0));
    const Vector x = unit(rng, 3);
    for (const PoolingSpec& p : all_poolings())
        CHECK(max_abs(partial_signature(x, bank, p).values - kernel_signature(x, bank, p).values) == 0.0);

    const auto one = share(sample_orthogonal_set(3, 1, 4));
    const TemplateBank single(random_templates(3, 4, 5), one, KernelSpec::rbf(1.0));
    const PooledSignature ps = partial_signature(x, single, PoolingSpec::max());
    for (Eigen::Index k = 0; k < 4; ++k)
        CHECK(std::abs(ps.values(k, 0) - kernel_eval(KernelSpec::rbf(1.0), x, single.transformed(0).col(k))) <=
              1e-15);
}

TEST_CASE("partial_signature: invariance when projections vanish outside G0")
{
    // G0 = shifts by 0..3 of the 8-cycle; template e_0, so the projection of x
    // onto g_k e_0 is x_k. Vectors supported on coordinates {0, 1} keep every
    // nonzero projection inside G0 after shifts by 0, 1 or 2.
    const auto cycle = make_exact_group(groups::CyclicShift{8});
    Matrix e0 = Matrix::Zero(8, 1);
    e0(0, 0) = 1.0;
    std::vector<std::size_t> window;
    for (std::size_t k = 0; k < 4; ++k) {
        Vector ek = Vector::Zero(8);
        ek[static_cast<Eigen::Index>(k)] = 1.0;
        for (std::size_t i = 0; i < cycle.size(); ++i)
            if ((cycle.element(i) * e0.col(0) - ek).norm() == 0.0)
                window.push_back(i);
    }
    REQUIRE(window.size() == 4);
    const auto g0 = share(cycle.subset(window));
    const TemplateBank bank(e0, g0, KernelSpec::linear());

    Vector x = Vector::Zero(8);
    x[0] = 0.6;
    x[1] = 0.8;
    for (const PoolingSpec& p : all_poolings()) {
        const Matrix base = partial_signature(x, bank, p).values;
        for (std::size_t shift = 0; shift < 3; ++shift) {
            const Vector moved = g0->apply(shift, x);
            CHECK(max_abs(partial_signature(moved, bank, p).values - base) <= 1e-6);
        }
    }
    // Outside the premise invariance is lost: shifting by 3 pushes x_1 out.
    const Vector out = g0->apply(3, x);
    CHECK(max_abs(partial_signature(out, bank, PoolingSpec::mean()).values -
                  partial_signature(x, bank, PoolingSpec::mean()).values) > 1e-3);
}

TEST_CASE("uniqueness: overlapping orbits give equal signatures")
{
    std::mt19937_64 rng(14);
    const auto s = share(make_exact_group(groups::SignedPermutations{3}));
    const TemplateBank bank(random_templates(3, 4, 2), s, KernelSpec::rbf(1.0));
    for (int t = 0; t < 10; ++t) {
        const Vector x = unit(rng, 3);
        const Vector xp = s->apply(static_cast<std::size_t>(t) % s->size(), x);
        // The orbits share a point by construction; confirm and compare.
        bool shared = false;
        for (std::size_t g = 0; g < s->size(); ++g)
            shared = shared || (s->apply(g, x) - xp).norm() <= 1e-10;
        REQUIRE(shared);
        for (const PoolingSpec& p : all_poolings())
            CHECK(max_abs(kernel_signature(x, bank, p).values - kernel_signature(xp, bank, p).values) <= 1e-8);
    }
}

TEST_CASE("stability terms and report")
{
    std::mt19937_64 rng(15);
    const auto s = share(make_exact_group(groups::CyclicRotation{3, 0, 1, 4}));
    const TemplateBank bank(random_templates(3, 5, 8), s, KernelSpec::rbf(1.0));
    const PoolingSpec ok = PoolingSpec::mean(1.0 / std::sqrt(2.0));
    const Vector x = unit(rng, 3);
    const StabilityTerms same = stability_terms(bank, ok, x, x);
    CHECK(same.distance_sq == 0.0);
    CHECK(same.bound_hausdorff() >= -1e-15);

    const Vector y = unit(rng, 3);
    const StabilityTerms t = stability_terms(bank, ok, x, y);
    double best = -1;
    for (const Matrix& g : s->elements())
        for (const Matrix& h : s->elements())
            best = std::max(best, oracle::k_rbf(oracle::matvec(oracle::to_mat(g), oracle::to_vec(x)),
                                                oracle::matvec(oracle::to_mat(h), oracle::to_vec(y)), 1.0));
    CHECK(std::abs(t.hausdorff - best) <= 1e-15);
    CHECK(t.kernel_value == doctest::Approx(kernel_eval(KernelSpec::rbf(1.0), x, y)));
    const Matrix sx = kernel_signature(x, bank, ok).values, sy = kernel_signature(y, bank, ok).values;
    CHECK(std::abs(t.distance_sq - (sx - sy).squaredNorm() / 5.0) <= 1e-15);

    const StabilityReport rep = check_stability(bank, ok, 300, 1);
    CHECK(rep.certified);
    CHECK(rep.pairs == 300);
    CHECK(rep.violations == 0);
    CHECK(rep.plain_violations == 0);
    CHECK(rep.max_slack < 0.0);

    const auto one = share(sample_orthogonal_set(3, 1, 2));
    const TemplateBank single(random_templates(3, 5, 8), one, KernelSpec::rbf(1.0));
    const StabilityReport r1 = check_stability(single, PoolingSpec::cdf(4, 0.5, 0.35), 300, 2);
    CHECK(r1.certified);
    CHECK(r1.violations == 0);
}

TEST_CASE("stability refuses uncertifiable configurations")
{
    const auto s = share(make_exact_group(groups::Permutations{3}));
    const TemplateBank rbf(random_templates(3, 3, 1), s, KernelSpec::rbf(1.0));
    const StabilityReport m = check_stability(rbf, PoolingSpec::max(0.1), 10, 1);
    CHECK_FALSE(m.certified);
    CHECK(m.pairs == 0);
    const StabilityReport big = check_stability(rbf, PoolingSpec::moment(3), 10, 1);
    CHECK_FALSE(big.certified);
    CHECK(big.required_lipschitz == doctest::Approx(1.0 / (3.0 * std::sqrt(2.0))));
    CHECK(big.reason.find("need L") != std::string::npos);
    const TemplateBank lin(random_templates(3, 3, 1), s, KernelSpec::linear());
    CHECK_FALSE(check_stability(lin, PoolingSpec::mean(0.5), 10, 1).certified);
}

TEST_CASE("signature CSV layout")
{
    const auto names = signature_column_names(2, PoolingSpec::moment(2));
    REQUIRE(names.size() == 4);
    CHECK(names[0] == "t1_eta1");
    CHECK(names[3] == "t2_eta2");
    Matrix sig(1, 4);
    sig << 0.5, 0.25, 1, 0;
    std::ostringstream os;
    write_signature_csv(os, sig, 2, PoolingSpec::moment(2));
    CHECK(os.str() == "t1_eta1,t1_eta2,t2_eta1,t2_eta2\n0.5,0.25,1,0\n");
    CHECK_THROWS_AS(write_signature_csv(os, sig, 3, PoolingSpec::moment(2)), std::invalid_argument);
}

TEST_CASE("batch extraction matches single-sample extraction")
{
    std::mt19937_64 rng(16);
    const auto s = share(sample_orthogonal_set(5, 4, 3));
    const Matrix T = random_templates(5, 6, 2);
    const TemplateBank bank(T, s, KernelSpec::rbf(1.0));
    Matrix X(8, 5);
    for (Eigen::Index i = 0; i < 8; ++i)
        X.row(i) = unit(rng, 5).transpose();
    const PoolingSpec p = PoolingSpec::cdf(3, 0.3);
    const Matrix batch = kernel_signatures(X, bank, p);
    const Matrix lbatch = linear_signatures(X, *s, T, p);
    for (Eigen::Index i = 0; i < 8; ++i) {
        CHECK(max_abs(batch.row(i).transpose() - kernel_signature(X.row(i), bank, p).flatten()) <= 1e-15);
        CHECK(max_abs(lbatch.row(i).transpose() - linear_signature(X.row(i), *s, T, p).flatten()) <= 1e-15);
    }
}
