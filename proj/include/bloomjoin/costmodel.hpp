#pragma once

// Two-phase execution-time model and optimal false-positive rate.
//
//   filter build (size space):  t = K1 * m_bits + K2
//   filter build (eps space):   t = C0 + C1 * ln(1/eps)
//   filter + join:              t = L1 + L2*eps + P(eps) * ln P(eps),  P(eps) = A*eps + B
//
// With m = n * 1.44 * log2(1/eps) the two filter-build forms coincide for
// C1 = K1 * n * 1.44 / ln 2 and C0 = K2. The optimum is the root of
//
//   d/deps total = A * ln(A*eps + B) + A + L2 - C1/eps
//
// on (eps_min, 1], or a boundary when the derivative keeps one sign.
// All logarithms in eps space are natural.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace bloomjoin::costmodel {

inline constexpr double kDefaultEpsMin = 1e-6;

struct BloomTimeModel {
    double k1 = 0.0;  // seconds per filter bit
    double k2 = 0.0;  // fixed seconds
    double residual_rms = 0.0;
    bool clamped = false;  // unconstrained fit gave k1 < 0
};

struct BloomTimeModelEps {
    double c0 = 0.0;
    double c1 = 0.0;  // seconds per unit ln(1/eps)
};

struct JoinTimeModel {
    double l1 = 0.0;
    double l2 = 0.0;
    double a = 0.0;
    double b = 1.0;
    double residual_rms = 0.0;
    bool converged = true;
};

enum class Method { newton, bisection, boundary };

std::string_view method_name(Method method) noexcept;
// Throws InvalidArgument for unknown names.
Method parse_method(std::string_view name);

struct OptimalEpsilon {
    double epsilon_star = 1.0;
    std::size_t iterations = 0;
    double residual = 0.0;  // |derivative(epsilon_star)|
    Method method = Method::boundary;
    bool warning = false;  // iteration cap hit or model flat over the domain
};

struct SizeObservation {
    double m_bits = 0.0;
    double seconds = 0.0;
};

struct EpsObservation {
    double epsilon = 0.0;
    double seconds = 0.0;
};

BloomTimeModelEps to_eps_space(const BloomTimeModel& model, double n_elements);
double eval_bloom_size_model(const BloomTimeModel& model, double m_bits);

// C0 + C1 ln(1/eps). Throws InvalidArgument unless 0 < eps <= 1.
double eval_bloom_model(const BloomTimeModelEps& model, double epsilon);
// L1 + L2 eps + (A eps + B) ln(A eps + B). Throws InvalidArgument unless
// 0 < eps <= 1 and DomainError when A eps + B <= 0.
double eval_join_model(const JoinTimeModel& model, double epsilon);
double model_total(double epsilon, const BloomTimeModelEps& bloom, const JoinTimeModel& join);
double total_derivative(double epsilon, const BloomTimeModelEps& bloom, const JoinTimeModel& join);

// Ordinary least squares. Throws Underdetermined with fewer than two
// distinct sizes.
BloomTimeModel fit_bloom_model(std::span<const SizeObservation> observations);

struct JoinFitOptions {
    std::size_t max_iterations = 200;
    std::uint64_t seed = 7;
};

// Variable projection: (L1, L2) solved linearly for each candidate (A, B),
// outer multi-start coordinate descent refined by Gauss-Newton. Throws
// Underdetermined with fewer than four distinct epsilon values.
JoinTimeModel fit_join_model(std::span<const EpsObservation> observations, const JoinFitOptions& options = {});

struct SolveOptions {
    double tolerance = 1e-12;
    double eps_min = kDefaultEpsMin;
    std::size_t max_iterations = 100;
};

// Newton iteration on the derivative with bisection fallback inside a sign
// bracket on [eps_min, 1]. Throws InvalidArgument for models that are
// undefined anywhere on the domain.
OptimalEpsilon solve_optimal_epsilon(const BloomTimeModelEps& bloom, const JoinTimeModel& join,
                                     const SolveOptions& options = {});

}  // namespace bloomjoin::costmodel
