#pragma once

// Two-qubit polarization state algebra: Bell/Werner states, analyzer
// projections, visibility, CHSH, fidelity, key-rate estimation and
// linear-inversion tomography. Basis order is (HH, HV, VH, VV).

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "ringqkd/common.hpp"

namespace ringqkd {

using Matrix4c = Eigen::Matrix4cd;
using Matrix2c = Eigen::Matrix2cd;
using Vector4c = Eigen::Vector4cd;
using Vector2c = Eigen::Vector2cd;
using complexd = std::complex<double>;

enum class BellKind { PhiPlus, PhiMinus };

inline const char* to_string(BellKind k) {
    return k == BellKind::PhiPlus ? "phi+" : "phi-";
}

enum class Basis { HV, DA };

/// Polarization analyzer pair. Angles are polarization transmission axes in
/// degrees (an HWP would sit at half the angle). The quarter flags add a 90
/// degree retardation on the V component for circular-basis projections.
struct AnalyzerSetting {
    double theta_a_deg = 0.0;
    double theta_b_deg = 0.0;
    bool quarter_a = false;
    bool quarter_b = false;
};

namespace detail {

inline Matrix4c kron2(const Matrix2c& a, const Matrix2c& b) {
    Matrix4c out;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
    return out;
}

/// Transmitted analyzer ket: cos(t)|H> + p sin(t)|V>, p = i when quarter.
inline Vector2c analyzer_ket(double theta_deg, bool quarter) {
    const double t = deg_to_rad(theta_deg);
    const complexd phase = quarter ? complexd(0.0, 1.0) : complexd(1.0, 0.0);
    return Vector2c(std::cos(t), phase * std::sin(t));
}

inline Matrix2c analyzer_projector(double theta_deg, bool quarter) {
    const Vector2c k = analyzer_ket(theta_deg, quarter);
    return k * k.adjoint();
}

}  // namespace detail

/// 4x4 density matrix over (HH, HV, VH, VV). Construction validates
/// hermiticity (1e-12), unit trace (1e-12) and positivity (eigmin >= -1e-10).
class TwoQubitState {
public:
    explicit TwoQubitState(const Matrix4c& rho) : rho_(rho) {
        if ((rho_ - rho_.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
            throw std::invalid_argument("TwoQubitState: matrix is not Hermitian");
        if (std::abs(rho_.trace().real() - 1.0) > 1e-12 ||
            std::abs(rho_.trace().imag()) > 1e-12)
            throw std::invalid_argument("TwoQubitState: trace is not 1");
        Eigen::SelfAdjointEigenSolver<Matrix4c> es(rho_, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-10)
            throw std::invalid_argument("TwoQubitState: matrix is not positive semidefinite");
    }

    const Matrix4c& rho() const { return rho_; }

    double purity() const { return (rho_ * rho_).trace().real(); }

private:
    Matrix4c rho_;
};

inline Vector4c bell_ket(BellKind kind) {
    const double s = kind == BellKind::PhiPlus ? 1.0 : -1.0;
    Vector4c v = Vector4c::Zero();
    v(0) = 1.0 / std::sqrt(2.0);
    v(3) = s / std::sqrt(2.0);
    return v;
}

/// |phi+-><phi+-| with phi+- = (|HH> +- |VV>)/sqrt(2).
inline TwoQubitState bell_state(BellKind kind) {
    const Vector4c k = bell_ket(kind);
    return TwoQubitState(k * k.adjoint());
}

inline TwoQubitState maximally_mixed() {
    return TwoQubitState(Matrix4c::Identity() / 4.0);
}

/// v |phi><phi| + (1-v) I/4. v equals the two-photon visibility in every basis.
inline TwoQubitState werner(BellKind kind, double visibility) {
    if (!(visibility >= 0.0 && visibility <= 1.0))
        throw std::invalid_argument("werner: visibility must be in [0, 1]");
    const Vector4c k = bell_ket(kind);
    Matrix4c rho = visibility * (k * k.adjoint()).eval() +
                   (1.0 - visibility) / 4.0 * Matrix4c::Identity();
    return TwoQubitState(rho);
}

/// Werner state with the HH-VV coherence additionally scaled by (1 - damping).
/// Decouples the DA-basis visibility (v*(1-damping)) from the HV one (v).
inline TwoQubitState phase_damped_werner(BellKind kind, double visibility, double damping) {
    if (!(visibility >= 0.0 && visibility <= 1.0))
        throw std::invalid_argument("phase_damped_werner: visibility must be in [0, 1]");
    if (!(damping >= 0.0 && damping <= 1.0))
        throw std::invalid_argument("phase_damped_werner: damping must be in [0, 1]");
    const Vector4c k = bell_ket(kind);
    Matrix4c rho = visibility * (k * k.adjoint()).eval() +
                   (1.0 - visibility) / 4.0 * Matrix4c::Identity();
    rho(0, 3) *= 1.0 - damping;
    rho(3, 0) *= 1.0 - damping;
    return TwoQubitState(rho);
}

/// Born-rule probability that both photons pass their analyzers:
/// Tr(rho P(theta_a) (x) P(theta_b)).
inline double coincidence_probability(const TwoQubitState& state, const AnalyzerSetting& s) {
    const Matrix4c proj = detail::kron2(detail::analyzer_projector(s.theta_a_deg, s.quarter_a),
                                        detail::analyzer_projector(s.theta_b_deg, s.quarter_b));
    return std::clamp((state.rho() * proj).trace().real(), 0.0, 1.0);
}

/// Probabilities of the four joint PBS outcomes (TT, TR, RT, RR) at a setting.
/// T = transmitted (axis theta), R = reflected (axis theta + 90). Sums to 1.
inline std::array<double, 4> joint_outcome_probabilities(const TwoQubitState& state,
                                                         const AnalyzerSetting& s) {
    const Matrix2c pa = detail::analyzer_projector(s.theta_a_deg, s.quarter_a);
    const Matrix2c pb = detail::analyzer_projector(s.theta_b_deg, s.quarter_b);
    const Matrix2c qa = Matrix2c::Identity() - pa;
    const Matrix2c qb = Matrix2c::Identity() - pb;
    const auto prob = [&](const Matrix2c& a, const Matrix2c& b) {
        return std::clamp((state.rho() * detail::kron2(a, b)).trace().real(), 0.0, 1.0);
    };
    return {prob(pa, pb), prob(pa, qb), prob(qa, pb), prob(qa, qb)};
}

/// Single-arm transmit probability (partner traced out). arm: 0 = A, 1 = B.
inline double transmit_marginal(const TwoQubitState& state, int arm,
                                double theta_deg, bool quarter) {
    const Matrix2c p = detail::analyzer_projector(theta_deg, quarter);
    Matrix2c reduced = Matrix2c::Zero();
    const Matrix4c& r = state.rho();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                reduced(i, j) += arm == 0 ? r(2 * i + k, 2 * j + k) : r(2 * k + i, 2 * k + j);
    return std::clamp((reduced * p).trace().real(), 0.0, 1.0);
}

/// (p_max - p_min)/(p_max + p_min) over co-aligned vs crossed analyzers.
/// HV uses axes {0, 90}, DA uses {45, 135}.
inline double visibility(const TwoQubitState& state, Basis basis) {
    const double base = basis == Basis::HV ? 0.0 : 45.0;
    double pmax = 0.0, pmin = 1.0;
    for (double a : {base, base + 90.0})
        for (double b : {base, base + 90.0}) {
            const double p = coincidence_probability(state, {a, b});
            pmax = std::max(pmax, p);
            pmin = std::min(pmin, p);
        }
    if (pmax + pmin <= 0.0)
        throw data_error("visibility: undefined, all coincidence probabilities vanish");
    return (pmax - pmin) / (pmax + pmin);
}

namespace detail {

inline double correlation(const TwoQubitState& state, double a_deg, double b_deg) {
    const auto p = joint_outcome_probabilities(state, {a_deg, b_deg});
    const double total = p[0] + p[1] + p[2] + p[3];
    return (p[0] - p[1] - p[2] + p[3]) / total;
}

}  // namespace detail

/// <phi_target| rho |phi_target>.
inline double fidelity(const TwoQubitState& state, BellKind target) {
    const Vector4c k = bell_ket(target);
    return std::clamp((k.adjoint() * state.rho() * k)(0).real(), 0.0, 1.0);
}

/// CHSH S at the canonical settings a=0, a'=45, b=22.5, b'=67.5 (PhiPlus
/// alignment; the b arm is negated for PhiMinus-dominant states). Equals
/// 2*sqrt(2)*v for Werner(v).
inline double chsh(const TwoQubitState& state) {
    const double sign = fidelity(state, BellKind::PhiPlus) >= fidelity(state, BellKind::PhiMinus)
                            ? 1.0
                            : -1.0;
    const double a = 0.0, ap = 45.0;
    const double b = sign * 22.5, bp = sign * 67.5;
    return detail::correlation(state, a, b) - detail::correlation(state, a, bp) +
           detail::correlation(state, ap, b) + detail::correlation(state, ap, bp);
}

/// Uhlmann fidelity between two density matrices, (Tr sqrt(sqrt(r) s sqrt(r)))^2.
inline double state_fidelity(const TwoQubitState& a, const TwoQubitState& b) {
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(a.rho());
    Eigen::Vector4d ev = es.eigenvalues().cwiseMax(0.0);
    const Matrix4c sqrt_a =
        es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().adjoint();
    Eigen::SelfAdjointEigenSolver<Matrix4c> em(sqrt_a * b.rho() * sqrt_a);
    const double root_sum = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    return std::clamp(root_sum * root_sum, 0.0, 1.0);
}

/// Binary Shannon entropy, H(0) = H(1) = 0 by continuity.
inline double binary_entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("binary_entropy: p must be in [0, 1]");
    if (p == 0.0 || p == 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

inline double qber_from_visibility(double v) { return (1.0 - v) / 2.0; }

/// Inputs to the secure-key-rate estimate. Counts (or rates) are per matched
/// basis; m is the bidirectional error-correction inefficiency.
struct KeyRateInputs {
    double c_hv = 0.0;
    double c_da = 0.0;
    double v_hv = 1.0;
    double v_da = 1.0;
    double m = 1.1;
};

/// R = 1/2 C_DA [1 - (1+m) H((1-V_DA)/2)] + 1/2 C_HV [1 - (1+m) H((1-V_HV)/2)].
/// May be negative; callers clamp for reporting.
inline double secure_key_rate(const KeyRateInputs& in) {
    if (in.c_hv < 0.0 || in.c_da < 0.0)
        throw std::invalid_argument("secure_key_rate: counts must be non-negative");
    if (!(in.v_hv >= 0.0 && in.v_hv <= 1.0 && in.v_da >= 0.0 && in.v_da <= 1.0))
        throw std::invalid_argument("secure_key_rate: visibilities must be in [0, 1]");
    if (in.m < 0.0)
        throw std::invalid_argument("secure_key_rate: m must be non-negative");
    const double ra = 1.0 - (1.0 + in.m) * binary_entropy(qber_from_visibility(in.v_da));
    const double rb = 1.0 - (1.0 + in.m) * binary_entropy(qber_from_visibility(in.v_hv));
    return 0.5 * in.c_da * ra + 0.5 * in.c_hv * rb;
}

// ---------------------------------------------------------------------------
// Tomography

struct TomographyRecord {
    AnalyzerSetting setting;
    double count = 0.0;
};

/// The six per-arm analyzer states used by the stock tomography schedule:
/// H, V, D, A and the two circular projections.
inline const std::array<std::pair<double, bool>, 6>& tomography_arm_states() {
    static const std::array<std::pair<double, bool>, 6> states = {{
        {0.0, false}, {90.0, false}, {45.0, false}, {135.0, false}, {45.0, true}, {135.0, true},
    }};
    return states;
}

/// Overcomplete 36-setting (6x6) projection set spanning the two-qubit space.
inline std::vector<AnalyzerSetting> tomography_settings() {
    std::vector<AnalyzerSetting> out;
    out.reserve(36);
    for (const auto& [ta, qa] : tomography_arm_states())
        for (const auto& [tb, qb] : tomography_arm_states())
            out.push_back({ta, tb, qa, qb});
    return out;
}

/// Expected counts for a state at the given settings with n_per_setting pairs
/// each; the synthetic-data half of reconstruction round-trip checks.
inline std::vector<TomographyRecord> synthetic_tomography_counts(
    const TwoQubitState& state, const std::vector<AnalyzerSetting>& settings,
    double n_per_setting) {
    std::vector<TomographyRecord> rec;
    rec.reserve(settings.size());
    for (const auto& s : settings)
        rec.push_back({s, n_per_setting * coincidence_probability(state, s)});
    return rec;
}

namespace detail {

/// Hermitian basis: 4 diagonal units, then (|i><j| + |j><i|) and
/// i(|i><j| - |j><i|) for i < j. 16 real degrees of freedom.
inline const std::array<Matrix4c, 16>& hermitian_basis() {
    static const std::array<Matrix4c, 16> basis = [] {
        std::array<Matrix4c, 16> b;
        int n = 0;
        for (int i = 0; i < 4; ++i) {
            b[n] = Matrix4c::Zero();
            b[n](i, i) = 1.0;
            ++n;
        }
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) {
                b[n] = Matrix4c::Zero();
                b[n](i, j) = 1.0;
                b[n](j, i) = 1.0;
                ++n;
                b[n] = Matrix4c::Zero();
                b[n](i, j) = complexd(0.0, 1.0);
                b[n](j, i) = complexd(0.0, -1.0);
                ++n;
            }
        return b;
    }();
    return basis;
}

/// Eigenvalue projection onto the probability simplex (closest PSD unit-trace
/// spectrum in Frobenius norm).
inline Eigen::Vector4d project_to_simplex(Eigen::Vector4d lam) {
    Eigen::Vector4d sorted = lam;
    std::sort(sorted.data(), sorted.data() + 4, std::greater<double>());
    double cumulative = 0.0, shift = 0.0;
    for (int i = 0; i < 4; ++i) {
        cumulative += sorted(i);
        const double candidate = (cumulative - 1.0) / (i + 1);
        if (sorted(i) - candidate > 0.0) shift = candidate;
    }
    return (lam.array() - shift).max(0.0);
}

}  // namespace detail

/// Linear-inversion state estimate followed by projection to the nearest
/// (Frobenius) PSD unit-trace matrix. Settings are assumed to share one
/// unknown exposure (same pair flux and dwell per record), which is solved
/// for jointly with the state.
inline TwoQubitState tomography_reconstruct(std::span<const TomographyRecord> records) {
    if (records.size() < 16)
        throw data_error("tomography: need at least 16 settings, got " +
                         std::to_string(records.size()));
    double total = 0.0;
    for (const auto& r : records) {
        if (r.count < 0.0) throw data_error("tomography: negative count");
        total += r.count;
    }
    if (total <= 0.0) throw data_error("tomography: no counts");

    const auto& basis = detail::hermitian_basis();
    Eigen::MatrixXd design(records.size(), 16);
    Eigen::VectorXd counts(records.size());
    for (Eigen::Index r = 0; r < design.rows(); ++r) {
        const auto& s = records[r].setting;
        const Matrix4c proj =
            detail::kron2(detail::analyzer_projector(s.theta_a_deg, s.quarter_a),
                          detail::analyzer_projector(s.theta_b_deg, s.quarter_b));
        for (int k = 0; k < 16; ++k)
            design(r, k) = (proj * basis[k]).trace().real();
        counts(r) = records[r].count;
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-9);
    if (qr.rank() < 16)
        throw data_error("tomography: ill-posed reconstruction, setting matrix rank " +
                         std::to_string(qr.rank()) + " < 16");
    const Eigen::VectorXd x = qr.solve(counts);

    Matrix4c m = Matrix4c::Zero();
    for (int k = 0; k < 16; ++k) m += x(k) * basis[k];
    const double scale = m.trace().real();
    if (scale <= 0.0) throw data_error("tomography: non-positive reconstructed exposure");
    m /= scale;
    m = ((m + m.adjoint()) / 2.0).eval();

    Eigen::SelfAdjointEigenSolver<Matrix4c> es(m);
    const Eigen::Vector4d lam = detail::project_to_simplex(es.eigenvalues());
    Matrix4c rho =
        es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().adjoint();
    rho = ((rho + rho.adjoint()) / 2.0).eval();
    return TwoQubitState(rho / rho.trace().real());
}

}  // namespace ringqkd
