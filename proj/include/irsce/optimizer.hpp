// Adaptive-moment first-order optimizer with bias correction. Deterministic:
// identical gradient sequences produce bitwise-identical parameter
// trajectories.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace irsce {

struct AdamParams {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct ParamRef {
    double* data = nullptr;
    std::size_t size = 0;
};

class AdamOptimizer {
  public:
    AdamOptimizer() = default;

    AdamOptimizer(AdamParams params, const std::vector<std::size_t>& sizes) : p_(params) {
        m_.reserve(sizes.size());
        v_.reserve(sizes.size());
        for (std::size_t n : sizes) {
            m_.emplace_back(n, 0.0);
            v_.emplace_back(n, 0.0);
        }
    }

    long step_count() const { return t_; }
    const AdamParams& params() const { return p_; }
    void set_learning_rate(double lr) { p_.learning_rate = lr; }

    void step(const std::vector<ParamRef>& params, const std::vector<const double*>& grads) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw std::invalid_argument("AdamOptimizer::step: tensor count mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(p_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(p_.beta2, double(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            if (params[k].size != m_[k].size())
                throw std::invalid_argument("AdamOptimizer::step: tensor size mismatch");
            double* p = params[k].data;
            const double* g = grads[k];
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < m.size(); ++i) {
                m[i] = p_.beta1 * m[i] + (1.0 - p_.beta1) * g[i];
                v[i] = p_.beta2 * v[i] + (1.0 - p_.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p[i] -= p_.learning_rate * mhat / (std::sqrt(vhat) + p_.epsilon);
            }
        }
    }

  private:
    AdamParams p_;
    long t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace irsce
