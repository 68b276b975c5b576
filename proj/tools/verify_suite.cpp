#include "verify_suite.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <random>
#include <sstream>

#include "ginv/invariant_features.hpp"
#include "ginv/invariant_kernel.hpp"
#include "ginv/kernels.hpp"
#include "ginv/svm.hpp"

namespace ginv::cli {

namespace {

// Above these sizes the quadratic-in-|G| checks are skipped.
constexpr std::size_t kDirectModeLimit = 200;
constexpr std::size_t kOrbitTemplateLimit = 400;
constexpr std::size_t kElementSampleCap = 64;

Vector gaussian(std::mt19937_64& rng, std::size_t d)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Vector v(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = n(rng);
    return v;
}

Vector unit(std::mt19937_64& rng, std::size_t d)
{
    Vector v = gaussian(rng, d);
    return v / v.norm();
}

std::vector<std::size_t> element_sample(const OrthogonalSet& set, std::mt19937_64& rng)
{
    std::vector<std::size_t> idx(set.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = i;
    if (idx.size() > kElementSampleCap) {
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(kElementSampleCap);
    }
    return idx;
}

CheckResult make(std::string name, double measured, double tol, std::string note = {})
{
    return {std::move(name), measured, tol, measured <= tol, std::move(note)};
}

CheckResult skipped(std::string name, std::string note)
{
    return {std::move(name), 0.0, 0.0, true, "skipped: " + std::move(note)};
}

} // namespace

std::vector<CheckResult> run_verify_suite(const OrthogonalSet& group, const VerifyOptions& options)
{
    std::vector<CheckResult> out;
    const std::size_t d = group.dim();
    const std::size_t n = group.size();
    std::mt19937_64 rng(options.seed);
    auto shared = std::make_shared<const OrthogonalSet>(group);
    const Matrix psi = group_average(group).matrix();

    {
        double worst = 0.0;
        for (const Matrix& g : group.elements())
            worst = std::max(worst, max_abs(g * psi - psi));
        out.push_back(make("Psi invariance g'Psi = Psi", worst, 1e-10));
    }
    out.push_back(make("Psi symmetry Psi^T = Psi", max_abs(psi.transpose() - psi), 1e-10));
    out.push_back(make("Psi idempotence Psi Psi = Psi", max_abs(psi * psi - psi), 1e-10));
    {
        double adj = 0.0, proj = 0.0;
        for (std::size_t t = 0; t < options.trials; ++t) {
            const Vector w = gaussian(rng, d), w2 = gaussian(rng, d);
            adj = std::max(adj, std::abs(w.dot(psi * w2) - (psi * w).dot(w2)));
            const Vector pw2 = psi * w2;
            const double lhs = (psi * w).dot(pw2);
            const std::size_t g = t % n;
            proj = std::max(proj, std::abs(lhs - (group.element(g) * w).dot(pw2)));
        }
        out.push_back(make("Psi self-adjoint <w,Psi w'> = <Psi w,w'>", adj, 1e-10));
        out.push_back(make("Psi absorbs g <Psi w,Psi w'> = <g'w,Psi w'>", proj, 1e-10));
    }

    const KernelSpec kernels[] = {KernelSpec::linear(), KernelSpec::rbf(1.0), KernelSpec::polynomial(2, 1.0)};
    for (const KernelSpec& k : kernels)
        out.push_back(make("unitarity " + k.to_string(), verify_unitarity(k, group, options.trials, rng()), 1e-10));

    const KernelSpec rbf = KernelSpec::rbf(1.0);
    const std::size_t pairs = std::min<std::size_t>(options.trials, 20);
    {
        const InvariantKernel one = InvariantKernel::one_sided(rbf, shared);
        const auto elems = element_sample(group, rng);
        double worst = 0.0;
        for (std::size_t p = 0; p < pairs; ++p) {
            const Vector x = gaussian(rng, d), y = gaussian(rng, d);
            const double base = one(x, y);
            for (std::size_t a : elems)
                for (std::size_t b : elems)
                    worst = std::max(worst, std::abs(one(group.apply(a, x), group.apply(b, y)) - base));
        }
        out.push_back(make("invariance k_Psi one-sided rbf", worst, 1e-8));
    }
    if (n <= kDirectModeLimit) {
        const InvariantKernel one = InvariantKernel::one_sided(rbf, shared);
        const InvariantKernel dir = InvariantKernel::direct(rbf, shared);
        double worst = 0.0;
        for (std::size_t p = 0; p < pairs; ++p) {
            const Vector x = gaussian(rng, d), y = gaussian(rng, d);
            worst = std::max(worst, std::abs(one(x, y) - dir(x, y)));
        }
        out.push_back(make("one-sided = direct rbf", worst, 1e-10));
    } else {
        out.push_back(skipped("one-sided = direct rbf", "group larger than " + std::to_string(kDirectModeLimit)));
    }

    if (n <= kOrbitTemplateLimit) {
        Matrix seed_templates(static_cast<Eigen::Index>(d), 1);
        seed_templates.col(0) = unit(rng, d);
        auto bank = std::make_shared<const TemplateBank>(orbit_closed_templates(seed_templates, group), shared, rbf);
        const InvariantKernel tk = InvariantKernel::from_bank(bank);
        const auto elems = element_sample(group, rng);
        double worst = 0.0;
        for (std::size_t p = 0; p < pairs; ++p) {
            const Vector x = unit(rng, d), y = unit(rng, d);
            const double base = tk(x, y);
            for (std::size_t a : elems)
                worst = std::max(worst, std::abs(tk(group.apply(a, x), y) - base));
        }
        out.push_back(make("invariance template kernel rbf", worst, 1e-8, "orbit-closed templates"));
    } else {
        out.push_back(skipped("invariance template kernel rbf",
                              "group larger than " + std::to_string(kOrbitTemplateLimit)));
    }

    {
        Matrix templates = random_templates(d, 5, rng());
        const TemplateBank bank(templates, shared, rbf);
        const PoolingSpec poolings[] = {PoolingSpec::mean(), PoolingSpec::max(), PoolingSpec::moment(3),
                                        PoolingSpec::cdf(4, 0.25)};
        const auto elems = element_sample(group, rng);
        for (const PoolingSpec& pool : poolings) {
            double worst = 0.0;
            for (std::size_t s = 0; s < pairs; ++s) {
                const Vector x = unit(rng, d);
                const Matrix base = kernel_signature(x, bank, pool).values;
                for (std::size_t a : elems)
                    worst = std::max(worst, max_abs(kernel_signature(group.apply(a, x), bank, pool).values - base));
            }
            out.push_back(make("feature invariance " + pool.to_string(), worst, 1e-8));
        }

        const PoolingSpec compliant = PoolingSpec::mean(1.0 / std::sqrt(2.0));
        const StabilityReport rep = check_stability(bank, compliant, std::min<std::size_t>(options.trials, 200), rng());
        CheckResult r = make("stability " + compliant.to_string(), static_cast<double>(rep.violations), 0.0,
                             "violations over " + std::to_string(rep.pairs) + " pairs");
        r.passed = rep.certified && rep.violations == 0;
        if (!rep.certified)
            r.note = rep.reason;
        out.push_back(r);
    }

    {
        const std::size_t count = 40;
        const Vector direction = unit(rng, d);
        Matrix X(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(d));
        Vector y(static_cast<Eigen::Index>(count));
        for (std::size_t i = 0; i < count; ++i) {
            const double label = i % 2 == 0 ? 1.0 : -1.0;
            const Vector x = 2.0 * label * direction + 0.5 * gaussian(rng, d);
            X.row(static_cast<Eigen::Index>(i)) = x.transpose();
            y[static_cast<Eigen::Index>(i)] = label;
        }
        auto handle = std::make_shared<const InvariantKernel>(InvariantKernel::one_sided(rbf, shared));
        const SvmModel model = train_svm(X, y, invariant_kernel_function(handle), 10.0);
        CheckResult kkt = make("svm kkt residual", model.kkt_residual(), 1e-6);
        kkt.passed = kkt.passed && model.converged();
        out.push_back(kkt);

        const double feasibility = std::abs(model.alpha().dot(model.labels()));
        out.push_back(make("svm sum(alpha y) = 0", feasibility, 1e-8));

        const auto elems = element_sample(group, rng);
        double worst = 0.0;
        for (std::size_t t = 0; t < pairs; ++t) {
            const Vector x = gaussian(rng, d);
            const double f = model.decision_value(x);
            for (std::size_t a : elems)
                worst = std::max(worst, std::abs(model.decision_value(group.apply(a, x)) - f));
        }
        out.push_back(make("svm decision invariance", worst, 1e-6));
    }
    return out;
}

// Code points, so names holding UTF-8 still line up.
static std::size_t display_width(const std::string& s)
{
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string format_results(const std::vector<CheckResult>& results)
{
    std::size_t width = 5;
    for (const auto& r : results)
        width = std::max(width, display_width(r.name));
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(width)) << "check" << "  result" << std::right << std::setw(13)
       << "measured" << std::setw(11) << "tolerance" << '\n';
    for (const auto& r : results) {
        os << r.name << std::string(width - display_width(r.name), ' ') << "  " << (r.passed ? "PASS" : "FAIL")
           << "  " << std::right << std::scientific << std::setprecision(3) << std::setw(11) << r.measured << "  "
           << std::setw(9) << r.tolerance;
        if (!r.note.empty())
            os << "  " << r.note;
        os << '\n';
    }
    return os.str();
}

} // namespace ginv::cli
