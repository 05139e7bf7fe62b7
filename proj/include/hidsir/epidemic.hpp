#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "hidsir/errors.hpp"
#include "hidsir/filter.hpp"
#include "hidsir/markov_chain.hpp"
#include "hidsir/sde.hpp"

namespace hidsir {

// Scalar model coefficients. c1, c2 are always recomputed from the stored
// fields, never cached.
struct EpidemicParams {
    double a1 = 0.0;     // recruitment rate
    double b1 = 0.0;     // susceptible removal rate
    double b2 = 0.0;     // infected removal rate (mu_I + r)
    double sigma1 = 0.0; // S noise intensity
    double sigma2 = 0.0; // I noise intensity

    double c1() const { return b1 + sigma1 * sigma1 / 2.0; }
    double c2() const { return b2 + sigma2 * sigma2 / 2.0; }

    void validate() const {
        if (!(a1 > 0.0)) throw Error("EpidemicParams: a1 must be positive");
        if (!(b1 > 0.0)) throw Error("EpidemicParams: b1 must be positive");
        if (!(b2 > 0.0)) throw Error("EpidemicParams: b2 must be positive");
        if (sigma1 == 0.0 || sigma2 == 0.0)
            throw Error("EpidemicParams: noise intensities must be nonzero");
    }
};

struct EpidemicState {
    double S = 0.0;
    double I = 0.0;
};

// Incidence-rate pair (f, h). f drives the confirmed-infection rate I*f and h
// the hidden-class rate alpha*I*h. Both vanish at s = 0. The x-dependence is
// either constant or tabulated on a grid of signal values with linear
// interpolation in between.
class IncidenceModel {
public:
    enum class Family { Bilinear, HollingII, BeddingtonDeAngelis };

    // f(x,s,i) = m1(x) s, h(x,s,i) = m2(x) s / (1 + s + i): the worked-example
    // family, tabulated on the chain states.
    static IncidenceModel tabulated(std::vector<double> x_grid, std::vector<double> m1,
                                    std::vector<double> m2) {
        IncidenceModel m;
        m.family_ = Family::Bilinear;
        m.x_grid_ = std::move(x_grid);
        m.beta_ = std::move(m1);
        m.gamma_ = std::move(m2);
        m.check_tables();
        return m;
    }

    static IncidenceModel bilinear(double beta) {
        IncidenceModel m;
        m.family_ = Family::Bilinear;
        m.beta_ = {beta};
        m.gamma_ = {0.0};
        m.check_tables();
        return m;
    }

    static IncidenceModel holling2(double beta, double half_saturation) {
        if (!(half_saturation > 0.0)) throw Error("IncidenceModel: holling2 m1 must be positive");
        IncidenceModel m;
        m.family_ = Family::HollingII;
        m.beta_ = {beta};
        m.gamma_ = {0.0};
        m.fm1_ = half_saturation;
        m.check_tables();
        return m;
    }

    static IncidenceModel beddington(double beta, double m1, double m2) {
        if (m1 < 0.0 || m2 < 0.0) throw Error("IncidenceModel: beddington m1,m2 must be >= 0");
        IncidenceModel m;
        m.family_ = Family::BeddingtonDeAngelis;
        m.beta_ = {beta};
        m.gamma_ = {0.0};
        m.fm1_ = m1;
        m.fm2_ = m2;
        m.check_tables();
        return m;
    }

    // Optional per-state tables for the classical families.
    IncidenceModel& with_tables(std::vector<double> x_grid, std::vector<double> beta,
                                std::vector<double> gamma) {
        x_grid_ = std::move(x_grid);
        beta_ = std::move(beta);
        gamma_ = std::move(gamma);
        check_tables();
        return *this;
    }

    std::pair<double, double> eval(double x, double s, double i) const {
        if (s < 0.0 || i < 0.0) throw OutOfDomain("incidence: s and i must be nonnegative");
        if (x < 0.0 || x > 1.0) throw OutOfDomain("incidence: x must lie in [0,1]");
        return eval_unchecked(x, s, i);
    }

    std::pair<double, double> eval_unchecked(double x, double s, double i) const {
        const double beta = table_at(beta_, x);
        const double gamma = table_at(gamma_, x);
        double f = 0.0;
        switch (family_) {
        case Family::Bilinear:
            f = beta * s;
            break;
        case Family::HollingII:
            f = beta * s / (fm1_ + s);
            break;
        case Family::BeddingtonDeAngelis:
            f = beta * s / (1.0 + fm1_ * s + fm2_ * i);
            break;
        }
        const double h = gamma * s / (1.0 + s + i);
        return {f, h};
    }

    Family family() const { return family_; }
    const std::vector<double>& x_grid() const { return x_grid_; }
    const std::vector<double>& f_table() const { return beta_; }
    const std::vector<double>& h_table() const { return gamma_; }

private:
    double table_at(const std::vector<double>& tab, double x) const {
        if (tab.size() == 1) return tab[0];
        if (x <= x_grid_.front()) return tab.front();
        if (x >= x_grid_.back()) return tab.back();
        std::size_t k = 1;
        while (x_grid_[k] < x) ++k;
        const double w = (x - x_grid_[k - 1]) / (x_grid_[k] - x_grid_[k - 1]);
        return tab[k - 1] + w * (tab[k] - tab[k - 1]);
    }

    void check_tables() const {
        if (beta_.empty() || gamma_.empty()) throw Error("IncidenceModel: empty rate table");
        if (beta_.size() > 1 || gamma_.size() > 1) {
            if (x_grid_.size() != beta_.size() || x_grid_.size() != gamma_.size())
                throw Error("IncidenceModel: table sizes must match the x grid");
            for (std::size_t k = 0; k < x_grid_.size(); ++k) {
                if (!(x_grid_[k] >= 0.0 && x_grid_[k] <= 1.0))
                    throw Error("IncidenceModel: x grid must lie in [0,1]");
                if (k > 0 && !(x_grid_[k] > x_grid_[k - 1]))
                    throw Error("IncidenceModel: x grid must be strictly increasing");
            }
        }
        for (double b : beta_)
            if (b < 0.0) throw Error("IncidenceModel: f rates must be nonnegative");
        for (double g : gamma_)
            if (g < 0.0) throw Error("IncidenceModel: h rates must be nonnegative");
    }

    Family family_ = Family::Bilinear;
    std::vector<double> x_grid_;
    std::vector<double> beta_{0.0};
    std::vector<double> gamma_{0.0};
    double fm1_ = 1.0, fm2_ = 0.0;
};

inline std::pair<double, double> incidence_eval(const IncidenceModel& model, double x, double s,
                                                double i) {
    return model.eval(x, s, i);
}

namespace detail {

// Shared epidemic drift: given the already-averaged incidence pair
// (f_eff, alpha_h_eff) the fluxes cancel in the S+I sum by construction.
inline void epidemic_drift(const EpidemicParams& p, double s, double i, double f_eff,
                           double alpha_h_eff, std::span<double> out) {
    const double flux = i * f_eff + alpha_h_eff * i;
    out[0] = p.a1 - p.b1 * s - flux;
    out[1] = -p.b2 * i + flux;
}

inline int clamp_si(std::span<double> x, double floor) {
    return clamp_positive(x[0], floor) + clamp_positive(x[1], floor);
}

} // namespace detail

// Boundary equation in the absence of infection:
//   d phi = (a1 - b1 phi) dt + sigma1 phi dB1.
class BoundarySystem {
public:
    explicit BoundarySystem(const EpidemicParams& p, double floor = POSITIVITY_FLOOR)
        : p_(p), floor_(floor) {}

    std::size_t dimension() const { return 1; }
    std::size_t channels() const { return 1; }
    void drift(std::size_t, double, std::span<const double> x, std::span<double> out) const {
        out[0] = p_.a1 - p_.b1 * x[0];
    }
    void diffusion(std::size_t, double, std::span<const double> x, std::span<double> out) const {
        out[0] = p_.sigma1 * x[0];
    }
    int constrain(std::span<double> x) const { return clamp_positive(x[0], floor_); }

    const EpidemicParams& params() const { return p_; }

private:
    EpidemicParams p_;
    double floor_;
};

// Hidden-signal system over (S, I): the signal value alpha(t_k) is supplied
// per grid step (left-endpoint sample of the chain path).
class HiddenSystem {
public:
    HiddenSystem(const EpidemicParams& p, IncidenceModel model, std::vector<double> alpha_on_grid,
                 double floor = POSITIVITY_FLOOR)
        : p_(p), model_(std::move(model)), alpha_(std::move(alpha_on_grid)), floor_(floor) {}

    std::size_t dimension() const { return 2; }
    std::size_t channels() const { return 2; }

    void drift(std::size_t step, double, std::span<const double> x, std::span<double> out) const {
        const double a = alpha_[step < alpha_.size() ? step : alpha_.size() - 1];
        const auto [f, h] = model_.eval_unchecked(a, x[0], x[1]);
        detail::epidemic_drift(p_, x[0], x[1], f, a * h, out);
    }
    void diffusion(std::size_t, double, std::span<const double> x, std::span<double> out) const {
        out[0] = p_.sigma1 * x[0];
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = p_.sigma2 * x[1];
    }
    int constrain(std::span<double> x) const { return detail::clamp_si(x, floor_); }

private:
    EpidemicParams p_;
    IncidenceModel model_;
    std::vector<double> alpha_;
    double floor_;
};

// Prediction system: the signal frozen at a constant value m_k0.
class PredictedSystem {
public:
    PredictedSystem(const EpidemicParams& p, IncidenceModel model, double alpha0,
                    double floor = POSITIVITY_FLOOR)
        : p_(p), model_(std::move(model)), alpha0_(alpha0), floor_(floor) {
        if (alpha0 < 0.0 || alpha0 > 1.0) throw Error("PredictedSystem: m_k0 must lie in [0,1]");
    }

    std::size_t dimension() const { return 2; }
    std::size_t channels() const { return 2; }

    void drift(std::size_t, double, std::span<const double> x, std::span<double> out) const {
        const auto [f, h] = model_.eval_unchecked(alpha0_, x[0], x[1]);
        detail::epidemic_drift(p_, x[0], x[1], f, alpha0_ * h, out);
    }
    void diffusion(std::size_t, double, std::span<const double> x, std::span<double> out) const {
        out[0] = p_.sigma1 * x[0];
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = p_.sigma2 * x[1];
    }
    int constrain(std::span<double> x) const { return detail::clamp_si(x, floor_); }

private:
    EpidemicParams p_;
    IncidenceModel model_;
    double alpha0_;
    double floor_;
};

// Coupled (S, I, e_1..e_n) system with the incidence averaged over the filter
// weights. The third driving channel is either the observation increment
// sequence dy (cosimulation against a hidden truth) or a self-generated
// innovation Brownian motion; the e-drift differs accordingly.
class FilteredSystem {
public:
    enum class Driver { Observation, Innovation };

    FilteredSystem(const EpidemicParams& p, IncidenceModel model, ChainSpec spec, Driver driver,
                   double floor = POSITIVITY_FLOOR)
        : p_(p), model_(std::move(model)), spec_(std::move(spec)), driver_(driver),
          floor_(floor) {
        spec_.validate();
    }

    std::size_t dimension() const { return 2 + spec_.size(); }
    std::size_t channels() const { return 3; }

    void drift(std::size_t, double, std::span<const double> x, std::span<double> out) const {
        const double s = x[0], i = x[1];
        std::span<const double> e = x.subspan(2);
        double f_eff = 0.0, alpha_h_eff = 0.0;
        for (std::size_t k = 0; k < spec_.size(); ++k) {
            const auto [f, h] = model_.eval_unchecked(spec_.states[k], s, i);
            f_eff += f * e[k];
            alpha_h_eff += spec_.states[k] * h * e[k];
        }
        detail::epidemic_drift(p_, s, i, f_eff, alpha_h_eff, out);
        detail::wonham_drift(e, spec_, driver_ == Driver::Observation, out.subspan(2));
    }

    void diffusion(std::size_t, double, std::span<const double> x, std::span<double> out) const {
        const std::size_t d = dimension();
        std::fill(out.begin(), out.begin() + 3 * d, 0.0);
        out[0] = p_.sigma1 * x[0];     // channel 0 (B1) -> S
        out[d + 1] = p_.sigma2 * x[1]; // channel 1 (B2) -> I
        detail::wonham_dispersion(x.subspan(2), spec_, out.subspan(2 * d + 2)); // channel 2
    }

    int constrain(std::span<double> x) const {
        const int c = detail::clamp_si(x, floor_);
        project_simplex(x.subspan(2));
        return c;
    }

    const ChainSpec& chain() const { return spec_; }

private:
    EpidemicParams p_;
    IncidenceModel model_;
    ChainSpec spec_;
    Driver driver_;
    double floor_;
};

inline BoundarySystem make_boundary_system(const EpidemicParams& p) { return BoundarySystem(p); }

inline HiddenSystem make_hidden_system(const EpidemicParams& p, const IncidenceModel& model,
                                       const ChainPath& alpha, const ChainSpec& spec,
                                       const TimeGrid& grid) {
    const auto idx = alpha.sample_on_grid(grid);
    std::vector<double> values(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) values[k] = spec.states[idx[k]];
    return HiddenSystem(p, model, std::move(values));
}

inline PredictedSystem make_predicted_system(const EpidemicParams& p, const IncidenceModel& model,
                                             double m_k0) {
    return PredictedSystem(p, model, m_k0);
}

inline FilteredSystem make_filtered_system(const EpidemicParams& p, const IncidenceModel& model,
                                           const ChainSpec& spec,
                                           FilteredSystem::Driver driver) {
    return FilteredSystem(p, model, spec, driver);
}

} // namespace hidsir
