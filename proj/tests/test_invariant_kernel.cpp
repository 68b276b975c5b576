#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <sstream>

#include "ginv/instrumentation.hpp"
#include "ginv/invariant_kernel.hpp"
#include "oracles.hpp"

using namespace ginv;

namespace {

using SetPtr = std::shared_ptr<const OrthogonalSet>;

SetPtr share(OrthogonalSet s) { return std::make_shared<const OrthogonalSet>(std::move(s)); }

Vector gaussian(std::mt19937_64& rng, std::size_t d)
{
    std::normal_distribution<double> n;
    Vector v(static_cast<Eigen::Index>(d));
    for (auto& e : v)
        e = n(rng);
    return v;
}

/// (1/|G|^2) sum_{g,g'} k(gx, g'y) by explicit loops.
double double_sum(const std::function<double(const oracle::Vec&, const oracle::Vec&)>& k, const OrthogonalSet& s,
                  const Vector& x, const Vector& y)
{
    double total = 0.0;
    for (const Matrix& g : s.elements())
        for (const Matrix& h : s.elements())
            total += k(oracle::matvec(oracle::to_mat(g), oracle::to_vec(x)),
                       oracle::matvec(oracle::to_mat(h), oracle::to_vec(y)));
    return total / static_cast<double>(s.size() * s.size());
}

double rbf1(const oracle::Vec& a, const oracle::Vec& b) { return oracle::k_rbf(a, b, 1.0); }

} // namespace

TEST_CASE("direct mode examples")
{
    Vector e0(2), e1(2);
    e0 << 1, 0;
    e1 << 0, 1;
    const auto single = share(sample_orthogonal_set(2, 1, 0, SampleOptions{true}));
    const InvariantKernel trivial = InvariantKernel::direct(KernelSpec::rbf(1.0), single);
    std::mt19937_64 rng(4);
    const Vector x = gaussian(rng, 2), y = gaussian(rng, 2);
    CHECK(std::abs(invariant_eval_direct(trivial, x, y) - kernel_eval(KernelSpec::rbf(1.0), x, y)) <= 1e-15);

    const auto p2 = share(make_exact_group(groups::Permutations{2}));
    const InvariantKernel lin = InvariantKernel::direct(KernelSpec::linear(), p2);
    CHECK(std::abs(invariant_eval_direct(lin, e0, e1) - 0.5) <= 1e-15);

    for (const auto& s : {share(make_exact_group(groups::SignedPermutations{3})),
                          share(make_exact_group(groups::CyclicRotation{3, 0, 2, 6}))}) {
        const InvariantKernel k = InvariantKernel::direct(KernelSpec::linear(), s);
        const Matrix psi = group_average(*s).matrix();
        for (int t = 0; t < 20; ++t) {
            const Vector a = gaussian(rng, 3), b = gaussian(rng, 3);
            CHECK(std::abs(invariant_eval_direct(k, a, b) - (psi * a).dot(psi * b)) <= 1e-12);
        }
    }
}

TEST_CASE("direct mode matches the double-sum oracle for rbf on a random set")
{
    const auto s = share(sample_orthogonal_set(4, 5, 8));
    const InvariantKernel k = InvariantKernel::direct(KernelSpec::rbf(1.0), s);
    std::mt19937_64 rng(1);
    for (int t = 0; t < 10; ++t) {
        const Vector x = gaussian(rng, 4), y = gaussian(rng, 4);
        CHECK(std::abs(invariant_eval_direct(k, x, y) - double_sum(rbf1, *s, x, y)) <= 1e-14);
    }
}

TEST_CASE("one-sided mode")
{
    Vector e0(2), e1(2);
    e0 << 1, 0;
    e1 << 0, 1;
    const auto single = share(make_exact_group(groups::CyclicRotation{2, 0, 1, 1}));
    const InvariantKernel trivial = InvariantKernel::one_sided(KernelSpec::polynomial(2, 1.0), single);
    CHECK(invariant_eval_one_sided(trivial, e0, e1) == doctest::Approx(1.0));

    const auto p2 = share(make_exact_group(groups::Permutations{2}));
    CHECK(std::abs(invariant_eval_one_sided(InvariantKernel::one_sided(KernelSpec::linear(), p2), e0, e1) - 0.5) <=
          1e-15);

    const auto c4 = share(make_exact_group(groups::CyclicRotation{2, 0, 1, 4}));
    const InvariantKernel one = InvariantKernel::one_sided(KernelSpec::rbf(1.0), c4);
    std::mt19937_64 rng(2);
    for (int t = 0; t < 50; ++t) {
        const Vector x = gaussian(rng, 2), y = gaussian(rng, 2);
        CHECK(std::abs(invariant_eval_one_sided(one, x, y) - double_sum(rbf1, *c4, x, y)) <= 1e-10);
    }

    const auto partial = share(sample_orthogonal_set(2, 3, 1));
    const InvariantKernel bad = InvariantKernel::one_sided(KernelSpec::rbf(1.0), partial);
    CHECK_THROWS_AS(invariant_eval_one_sided(bad, e0, e1), NumericalError);
    CHECK_THROWS_AS(invariant_eval_direct(one, e0, e1), std::invalid_argument);
}

TEST_CASE("project_onto_templates")
{
    const std::size_t d = 4;
    const auto id = share(sample_orthogonal_set(d, 1, 0, SampleOptions{true}));
    const TemplateBank basis(Matrix::Identity(d, d), id, KernelSpec::linear(), 0.0);
    std::mt19937_64 rng(6);
    const Vector x = gaussian(rng, d);
    CHECK(max_abs(project_onto_templates(basis, x) - x) <= 1e-14);

    const Matrix T = random_templates(d, 5, 3);
    const TemplateBank rbf(T, id, KernelSpec::rbf(1.0), 0.0);
    const Vector u = project_onto_templates(rbf, T.col(2));
    Vector e2 = Vector::Zero(5);
    e2[2] = 1.0;
    CHECK(max_abs(u - e2) <= 1e-8);

    const Vector z = gaussian(rng, d);
    const Vector uz = project_onto_templates(rbf, z);
    // phi(T) u reproduces k(t_i, z): K(T,T) u = k(T, z).
    oracle::Vec rhs(5);
    for (int i = 0; i < 5; ++i)
        rhs[static_cast<std::size_t>(i)] = oracle::k_rbf(oracle::to_vec(T.col(i)), oracle::to_vec(z), 1.0);
    const oracle::Vec back = oracle::matvec(oracle::to_mat(rbf.gram_tt()), oracle::to_vec(uz));
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(std::abs(back[i] - rhs[i]) <= 1e-8 * std::sqrt(oracle::dot(rhs, rhs)));

    CHECK_THROWS_AS(project_onto_templates(rbf, Vector::Ones(3)), std::invalid_argument);
    // Zero input is allowed.
    CHECK_NOTHROW(project_onto_templates(rbf, Vector::Zero(d)));
}

TEST_CASE("template bank: transformed copies, ridge default, factorization failure")
{
    const auto s = share(make_exact_group(groups::SignedPermutations{2}));
    const Matrix T = random_templates(2, 3, 5);
    const TemplateBank bank(T, s, KernelSpec::rbf(1.0));
    for (std::size_t g = 0; g < s->size(); ++g)
        CHECK(max_abs(bank.transformed(g) - s->element(g) * T) <= 1e-12);
    CHECK(bank.ridge() == doctest::Approx(1e-8 * bank.gram_tt().trace() / 3.0));

    Matrix dup(2, 2);
    dup << 1, 1, 0, 0;
    CHECK_THROWS_AS(TemplateBank(dup, s, KernelSpec::linear(), 0.0), NumericalError);
    CHECK_THROWS_AS(TemplateBank(T, s, KernelSpec::rbf(1.0), -1.0), std::invalid_argument);
}

TEST_CASE("template mode examples")
{
    std::mt19937_64 rng(12);
    const std::size_t d = 3;
    for (const auto& s : {share(make_exact_group(groups::Permutations{3})),
                          share(make_exact_group(groups::SignedPermutations{3}))}) {
        auto bank = std::make_shared<const TemplateBank>(Matrix::Identity(d, d), s, KernelSpec::linear(), 0.0);
        const InvariantKernel tk = InvariantKernel::from_bank(bank);
        const Matrix psi = group_average(*s).matrix();
        for (int t = 0; t < 50; ++t) {
            const Vector x = gaussian(rng, d), y = gaussian(rng, d);
            CHECK(std::abs(invariant_eval_template(tk, x, y) - (psi * x).dot(psi * y)) <= 1e-8);
        }
    }

    // x, y among the template columns: equal to the direct double sum.
    const auto c8 = share(make_exact_group(groups::CyclicRotation{3, 0, 1, 8}));
    const Matrix T = random_templates(d, 6, 4);
    for (const KernelSpec& k : {KernelSpec::rbf(1.0), KernelSpec::polynomial(2, 1.0)}) {
        auto bank = std::make_shared<const TemplateBank>(T, c8, k);
        const InvariantKernel tk = InvariantKernel::from_bank(bank);
        const InvariantKernel dk = InvariantKernel::direct(k, c8);
        for (Eigen::Index i = 0; i < T.cols(); ++i)
            for (Eigen::Index j = 0; j < T.cols(); ++j)
                CHECK(std::abs(invariant_eval_template(tk, T.col(i), T.col(j)) -
                               invariant_eval_direct(dk, T.col(i), T.col(j))) <= 1e-6);
    }

    // Singleton group: the base-kernel reconstruction u_x^T K(T,T) u_y.
    const auto id = share(sample_orthogonal_set(d, 1, 0, SampleOptions{true}));
    auto bank = std::make_shared<const TemplateBank>(T, id, KernelSpec::rbf(1.0), 0.0);
    const InvariantKernel tk = InvariantKernel::from_bank(bank);
    const Vector x = T.col(0) * 0.5 + T.col(3) * 0.25, y = T.col(5);
    const Vector ux = bank->project(x), uy = bank->project(y);
    CHECK(std::abs(invariant_eval_template(tk, x, y) - ux.dot(bank->gram_tt() * uy)) <= 1e-12);
}

TEST_CASE("template mode never transforms the evaluated samples")
{
    const auto s = share(make_exact_group(groups::SignedPermutations{3}));
    auto bank = std::make_shared<const TemplateBank>(random_templates(3, 8, 1), s, KernelSpec::rbf(1.0));
    const InvariantKernel tk = InvariantKernel::from_bank(bank);
    std::mt19937_64 rng(3);
    Matrix X(10, 3);
    for (Eigen::Index i = 0; i < 10; ++i)
        X.row(i) = gaussian(rng, 3).transpose();
    const auto before = instrumentation::snapshot();
    const Matrix G = invariant_gram(tk, X, X);
    (void)invariant_eval_template(tk, X.row(0), X.row(1));
    (void)tk(X.row(2), X.row(3));
    const auto after = instrumentation::snapshot();
    CHECK(after.sample_transforms == before.sample_transforms);
    CHECK(after.template_transforms == before.template_transforms);
    CHECK(max_abs(G - G.transpose()) <= 1e-10);

    const auto b2 = instrumentation::snapshot();
    (void)invariant_eval_direct(InvariantKernel::direct(KernelSpec::rbf(1.0), s), X.row(0), X.row(1));
    CHECK(instrumentation::snapshot().sample_transforms > b2.sample_transforms);
}

TEST_CASE("invariant_gram: entrywise agreement and PSD")
{
    std::mt19937_64 rng(31);
    Matrix X(15, 3), Y(4, 3);
    for (Eigen::Index i = 0; i < 15; ++i)
        X.row(i) = gaussian(rng, 3).transpose();
    for (Eigen::Index i = 0; i < 4; ++i)
        Y.row(i) = gaussian(rng, 3).transpose();
    const auto single = share(sample_orthogonal_set(3, 1, 0, SampleOptions{true}));
    CHECK(max_abs(invariant_gram(InvariantKernel::direct(KernelSpec::rbf(1.0), single), X, X) -
                  gram_matrix(KernelSpec::rbf(1.0), X, X)) <= 1e-15);

    const auto p3 = share(make_exact_group(groups::Permutations{3}));
    const InvariantKernel dk = InvariantKernel::direct(KernelSpec::rbf(1.0), p3);
    const Matrix G = invariant_gram(dk, X, X);
    CHECK(oracle::jacobi_eigenvalues(oracle::to_mat(0.5 * (G + G.transpose()))).front() >= psd_floor(15));
    const Matrix C = invariant_gram(dk, X, Y);
    for (Eigen::Index i = 0; i < 15; ++i)
        for (Eigen::Index j = 0; j < 4; ++j)
            CHECK(std::abs(C(i, j) - invariant_eval_direct(dk, X.row(i), Y.row(j))) <= 1e-13);

    const InvariantKernel ok = InvariantKernel::one_sided(KernelSpec::rbf(1.0), p3);
    CHECK(max_abs(invariant_gram(ok, X, Y) - C) <= 1e-10);

    auto bank = std::make_shared<const TemplateBank>(random_templates(3, 10, 2), p3, KernelSpec::rbf(1.0));
    const InvariantKernel tk = InvariantKernel::from_bank(bank);
    const Matrix TG = invariant_gram(tk, X, X);
    CHECK(max_abs(TG - TG.transpose()) <= 1e-10);
    for (Eigen::Index i = 0; i < 15; i += 4)
        for (Eigen::Index j = 0; j < 15; j += 3)
            CHECK(std::abs(TG(i, j) - invariant_eval_template(tk, X.row(i), X.row(j))) <= 1e-10);
}

TEST_CASE("exact invariance of direct and orbit-closed template kernels")
{
    std::mt19937_64 rng(77);
    const auto s = share(make_exact_group(groups::SignedPermutations{2}));
    const InvariantKernel dk = InvariantKernel::direct(KernelSpec::rbf(1.0), s);
    auto bank = std::make_shared<const TemplateBank>(orbit_closed_templates(random_templates(2, 2, 9), *s), s,
                                                     KernelSpec::rbf(1.0));
    const InvariantKernel tk = InvariantKernel::from_bank(bank);
    for (int t = 0; t < 30; ++t) {
        const Vector x = gaussian(rng, 2), y = gaussian(rng, 2);
        const double base_d = dk(x, y), base_t = tk(x, y);
        for (std::size_t a = 0; a < s->size(); ++a)
            for (std::size_t b = 0; b < s->size(); ++b) {
                CHECK(std::abs(dk(s->apply(a, x), s->apply(b, y)) - base_d) <= 1e-8);
                CHECK(std::abs(tk(s->apply(a, x), s->apply(b, y)) - base_t) <= 1e-8);
            }
    }
}

TEST_CASE("bank serialization round trip and modes")
{
    const auto s = share(make_exact_group(groups::CyclicRotation{3, 1, 2, 5}));
    const TemplateBank bank(random_templates(3, 4, 8), s, KernelSpec::rbf(1.0));
    std::stringstream io;
    write_template_bank(io, bank);
    const TemplateBank back = read_template_bank(io, KernelSpec::rbf(1.0));
    CHECK(max_abs(back.templates() - bank.templates()) == 0.0);
    CHECK(back.set().size() == 5);
    CHECK(max_abs(back.averaged_cross_gram() - bank.averaged_cross_gram()) == 0.0);

    CHECK(parse_invariant_mode("template") == InvariantMode::template_bank);
    CHECK(parse_invariant_mode(to_string(InvariantMode::one_sided)) == InvariantMode::one_sided);
    CHECK_THROWS_AS(parse_invariant_mode("triple"), std::invalid_argument);
}
