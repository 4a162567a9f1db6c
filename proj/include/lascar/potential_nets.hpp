#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lascar/nn.hpp"
#include "lascar/patches.hpp"
#include "lascar/rng.hpp"

namespace lascar {

struct TrainConfig {
    double momentum = 0.9;
    int batch_size = 50;
    double weight_decay = 1e-4;
    int epochs = 15;
    double learning_rate = 0.01;
    double lr_decay = 0.8;   // stepped
    int lr_step_iters = 1000;
    uint64_t seed = 0;

    void validate() const {
        if (momentum < 0 || batch_size <= 0 || weight_decay < 0 || epochs <= 0 ||
            learning_rate <= 0 || lr_step_iters <= 0)
            throw std::invalid_argument("train config values must be positive");
        if (lr_decay <= 0 || lr_decay >= 1)
            throw std::invalid_argument("lr decay must lie in (0,1)");
    }
};

// Architecture constants: two conv layers of 8 and 16 3x3x3 kernels per scale
// pathway, each followed by rectification and 2x max pooling.
inline constexpr int kConv1Channels = 8;
inline constexpr int kConv2Channels = 16;
inline constexpr int kTnetHidden = 64;
inline constexpr int kFeatureDim = 16;  // output of the N-NET subnetwork F
inline constexpr int kSimHidden = 16;

namespace detail {

// One per-scale convolutional pathway plus the scratch needed for backprop.
template <typename T>
struct Pathway {
    Conv3d<T> conv1, conv2;
    Shape3 in_shape{}, mid_shape{}, out_shape{};
    int flat_dim = 0;

    // forward scratch (valid until the next forward call)
    std::vector<T> input, a1, p1, a2, p2, g_a1, g_p1, g_a2;
    std::vector<int> am1, am2;

    void init(const PatchGeometry& geom, Rng& rng) {
        in_shape = {geom.size[0], geom.size[1], geom.size[2]};
        mid_shape = pooled_shape(in_shape);
        out_shape = pooled_shape(mid_shape);
        if (shape_volume(mid_shape) == 0 || shape_volume(out_shape) == 0)
            throw std::invalid_argument("patch too small for two pooling stages");
        conv1.init(1, kConv1Channels, rng);
        conv2.init(kConv1Channels, kConv2Channels, rng);
        flat_dim = kConv2Channels * shape_volume(out_shape);

        const int n0 = shape_volume(in_shape), n1 = shape_volume(mid_shape),
                  n2 = shape_volume(out_shape);
        input.resize(n0);
        a1.resize(kConv1Channels * n0);
        p1.resize(kConv1Channels * n1);
        a2.resize(kConv2Channels * n1);
        p2.resize(kConv2Channels * n2);
        am1.resize(kConv1Channels * n1);
        am2.resize(kConv2Channels * n2);
        g_a1.resize(a1.size());
        g_p1.resize(p1.size());
        g_a2.resize(a2.size());
    }

    // Returns the flattened feature (view into p2).
    const std::vector<T>& forward(const std::vector<float>& patch) {
        if (static_cast<int>(patch.size()) != shape_volume(in_shape))
            throw std::invalid_argument("patch does not match network geometry");
        for (size_t i = 0; i < patch.size(); ++i) input[i] = static_cast<T>(patch[i]);
        conv1.forward(input.data(), in_shape, a1.data());
        relu_forward(a1.data(), static_cast<int>(a1.size()));
        maxpool_forward(a1.data(), in_shape, kConv1Channels, p1.data(), am1.data());
        conv2.forward(p1.data(), mid_shape, a2.data());
        relu_forward(a2.data(), static_cast<int>(a2.size()));
        maxpool_forward(a2.data(), mid_shape, kConv2Channels, p2.data(), am2.data());
        return p2;
    }

    // gfeat has flat_dim entries; parameter grads accumulate.
    void backward(const T* gfeat) {
        maxpool_backward(gfeat, mid_shape, kConv2Channels, am2.data(), g_a2.data());
        relu_backward(a2.data(), g_a2.data(), static_cast<int>(a2.size()));
        conv2.backward(p1.data(), g_a2.data(), mid_shape, g_p1.data());
        maxpool_backward(g_p1.data(), in_shape, kConv1Channels, am1.data(), g_a1.data());
        relu_backward(a1.data(), g_a1.data(), static_cast<int>(a1.size()));
        conv1.backward(input.data(), g_a1.data(), in_shape, nullptr);
    }

    void collect(std::vector<std::span<T>>& params, std::vector<std::span<T>>& grads) {
        params.emplace_back(conv1.w);
        grads.emplace_back(conv1.gw);
        params.emplace_back(conv1.b);
        grads.emplace_back(conv1.gb);
        params.emplace_back(conv2.w);
        grads.emplace_back(conv2.gw);
        params.emplace_back(conv2.b);
        grads.emplace_back(conv2.gb);
    }
};

}  // namespace detail

/// Eq-style similarity features: G = fi*fj + (1-fi)*(1-fj), componentwise.
/// Symmetric in its arguments, maps matching confident features toward 1.
template <typename T>
std::vector<T> similarity_features(const std::vector<T>& fi, const std::vector<T>& fj) {
    if (fi.size() != fj.size())
        throw std::invalid_argument("feature vectors must have equal length");
    std::vector<T> g(fi.size());
    for (size_t k = 0; k < fi.size(); ++k)
        g[k] = fi[k] * fj[k] + (T(1) - fi[k]) * (T(1) - fj[k]);
    return g;
}

// ---------------------------------------------------------------------------
// T-NET: per-scale pathways -> concat -> dense 64 -> relu -> dense 2 -> softmax.
// Output is (p_scar, p_normal); trained on squared error against the 0/1 label.
// ---------------------------------------------------------------------------
template <typename T>
class TNet {
public:
    TNet(const PatchGeometry& geom, uint64_t seed) : geom_(geom) {
        geom_.validate();
        Rng rng(Rng::mix(seed ^ 0x7A3Cull));
        paths_.resize(geom_.n_scales);
        int concat = 0;
        for (auto& p : paths_) {
            p.init(geom_, rng);
            concat += p.flat_dim;
        }
        fc1_.init(concat, kTnetHidden, rng);
        fc2_.init(kTnetHidden, 2, rng, 0.1);  // keep softmax out of saturation
        h0_.resize(concat);
        h1_.resize(kTnetHidden);
        g_h0_.resize(concat);
        g_h1_.resize(kTnetHidden);
        collect_blocks();
    }

    const PatchGeometry& geometry() const { return geom_; }

    std::array<T, 2> forward(const MultiScalePatchSet& msp) {
        if (static_cast<int>(msp.patches.size()) != geom_.n_scales)
            throw std::invalid_argument("scale count does not match network geometry");
        int off = 0;
        for (int s = 0; s < geom_.n_scales; ++s) {
            const auto& feat = paths_[s].forward(msp.patches[s]);
            std::copy(feat.begin(), feat.end(), h0_.begin() + off);
            off += paths_[s].flat_dim;
        }
        fc1_.forward(h0_.data(), h1_.data());
        relu_forward(h1_.data(), kTnetHidden);
        T z[2];
        fc2_.forward(h1_.data(), z);
        probs_ = softmax2(z[0], z[1]);
        return probs_;
    }

    // Squared error of the scar probability against the 0/1 label; parameter
    // gradients accumulate (callers zero them per batch).
    T loss_and_grad(const MultiScalePatchSet& msp, int label) {
        const auto p = forward(msp);
        const T diff = p[0] - static_cast<T>(label);
        const T loss = diff * diff;
        const T dp0 = T(2) * diff;
        // dp0/dz through softmax: p0*(delta - p)
        T gz[2] = {dp0 * p[0] * (T(1) - p[0]), dp0 * (-p[0] * p[1])};
        fc2_.backward(h1_.data(), gz, g_h1_.data());
        relu_backward(h1_.data(), g_h1_.data(), kTnetHidden);
        fc1_.backward(h0_.data(), g_h1_.data(), g_h0_.data());
        int off = 0;
        for (auto& path : paths_) {
            path.backward(g_h0_.data() + off);
            off += path.flat_dim;
        }
        return loss;
    }

    std::vector<std::span<T>>& param_blocks() { return params_; }
    std::vector<std::span<T>>& grad_blocks() { return grads_; }

    void zero_grads() {
        for (auto g : grads_)
            for (auto& x : g) x = T(0);
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& p : params_) n += p.size();
        return n;
    }

private:
    void collect_blocks() {
        params_.clear();
        grads_.clear();
        for (auto& p : paths_) p.collect(params_, grads_);
        params_.emplace_back(fc1_.w);
        grads_.emplace_back(fc1_.gw);
        params_.emplace_back(fc1_.b);
        grads_.emplace_back(fc1_.gb);
        params_.emplace_back(fc2_.w);
        grads_.emplace_back(fc2_.gw);
        params_.emplace_back(fc2_.b);
        grads_.emplace_back(fc2_.gb);
    }

    PatchGeometry geom_;
    std::vector<detail::Pathway<T>> paths_;
    Dense<T> fc1_, fc2_;
    std::vector<T> h0_, h1_, g_h0_, g_h1_;
    std::array<T, 2> probs_{};
    std::vector<std::span<T>> params_, grads_;
};

// ---------------------------------------------------------------------------
// N-NET: a shared feature subnetwork F (pathways -> dense k -> sigmoid, so
// components live in (0,1)), the similarity features G combined with the
// normalized node distance, and a small head ending in a sigmoid.
// ---------------------------------------------------------------------------
template <typename T>
class NNet {
public:
    NNet(const PatchGeometry& geom, uint64_t seed, double distance_scale = 1.0)
        : geom_(geom), d_scale_(distance_scale) {
        geom_.validate();
        if (!(distance_scale > 0)) throw std::invalid_argument("distance scale must be > 0");
        Rng rng(Rng::mix(seed ^ 0x9B1Full));
        paths_.resize(geom_.n_scales);
        int concat = 0;
        for (auto& p : paths_) {
            p.init(geom_, rng);
            concat += p.flat_dim;
        }
        fcF_.init(concat, kFeatureDim, rng, 0.1);  // keep sigmoids responsive
        fcS1_.init(kFeatureDim + 1, kSimHidden, rng);
        fcS2_.init(kSimHidden, 1, rng, 0.1);
        h0_.resize(concat);
        g_h0_.resize(concat);
        collect_blocks();
    }

    const PatchGeometry& geometry() const { return geom_; }
    double distance_scale() const { return d_scale_; }
    void set_distance_scale(double s) {
        if (!(s > 0)) throw std::invalid_argument("distance scale must be > 0");
        d_scale_ = s;
    }

    struct FeatureState {
        std::vector<T> h0;      // pathway concat
        std::vector<T> zF;      // pre-sigmoid
        std::vector<T> f;       // sigmoid output, in (0,1)^k
    };

    FeatureState features(const MultiScalePatchSet& msp) {
        if (static_cast<int>(msp.patches.size()) != geom_.n_scales)
            throw std::invalid_argument("scale count does not match network geometry");
        FeatureState st;
        st.h0.resize(h0_.size());
        int off = 0;
        for (int s = 0; s < geom_.n_scales; ++s) {
            const auto& feat = paths_[s].forward(msp.patches[s]);
            std::copy(feat.begin(), feat.end(), st.h0.begin() + off);
            off += paths_[s].flat_dim;
        }
        st.zF.resize(kFeatureDim);
        fcF_.forward(st.h0.data(), st.zF.data());
        st.f.resize(kFeatureDim);
        for (int k = 0; k < kFeatureDim; ++k) st.f[k] = sigmoid(st.zF[k]);
        return st;
    }

    // Head on precomputed features; symmetry in (fi, fj) is bit-exact because
    // the similarity features commute.
    T head(const std::vector<T>& fi, const std::vector<T>& fj, double distance_mm) {
        if (!(distance_mm > 0)) throw std::invalid_argument("distance must be > 0");
        const auto g = similarity_features(fi, fj);
        sim_in_.resize(kFeatureDim + 1);
        std::copy(g.begin(), g.end(), sim_in_.begin());
        sim_in_[kFeatureDim] = static_cast<T>(distance_mm / d_scale_);
        s1_.resize(kSimHidden);
        fcS1_.forward(sim_in_.data(), s1_.data());
        relu_forward(s1_.data(), kSimHidden);
        T z;
        fcS2_.forward(s1_.data(), &z);
        return sigmoid(z);
    }

    T forward(const MultiScalePatchSet& pi, const MultiScalePatchSet& pj,
              double distance_mm) {
        const auto fi = features(pi);
        const auto fj = features(pj);
        return head(fi.f, fj.f, distance_mm);
    }

    // Squared error against the 0/1 label similarity; gradients accumulate.
    // Both branches run through the shared subnetwork F.
    T loss_and_grad(const PairSample& s) {
        auto sti = features(s.a);
        // Pathway scratch is reused, so branch i's backward inputs must be
        // saved before branch j runs forward.
        std::vector<std::vector<T>> saved_inputs_i, saved_a1_i, saved_p1_i, saved_a2_i;
        std::vector<std::vector<int>> saved_am1_i, saved_am2_i;
        for (auto& p : paths_) {
            saved_inputs_i.push_back(p.input);
            saved_a1_i.push_back(p.a1);
            saved_p1_i.push_back(p.p1);
            saved_a2_i.push_back(p.a2);
            saved_am1_i.push_back(p.am1);
            saved_am2_i.push_back(p.am2);
        }
        auto stj = features(s.b);
        const T mhat = head(sti.f, stj.f, s.distance_mm);
        const T diff = mhat - static_cast<T>(s.same_label);
        const T loss = diff * diff;

        // Head backward.
        const T gz = T(2) * diff * mhat * (T(1) - mhat);
        g_s1_.resize(kSimHidden);
        fcS2_.backward(s1_.data(), &gz, g_s1_.data());
        relu_backward(s1_.data(), g_s1_.data(), kSimHidden);
        g_sim_in_.resize(kFeatureDim + 1);
        fcS1_.backward(sim_in_.data(), g_s1_.data(), g_sim_in_.data());

        // dG/dfi = 2 fj - 1, dG/dfj = 2 fi - 1, then through each sigmoid.
        std::vector<T> gzF_i(kFeatureDim), gzF_j(kFeatureDim);
        for (int k = 0; k < kFeatureDim; ++k) {
            const T gG = g_sim_in_[k];
            const T dfi = gG * (T(2) * stj.f[k] - T(1));
            const T dfj = gG * (T(2) * sti.f[k] - T(1));
            gzF_i[k] = dfi * sti.f[k] * (T(1) - sti.f[k]);
            gzF_j[k] = dfj * stj.f[k] * (T(1) - stj.f[k]);
        }

        // Branch j first (its pathway scratch is current).
        fcF_.backward(stj.h0.data(), gzF_j.data(), g_h0_.data());
        int off = 0;
        for (auto& p : paths_) {
            p.backward(g_h0_.data() + off);
            off += p.flat_dim;
        }
        // Restore branch i scratch and run its backward.
        for (size_t k = 0; k < paths_.size(); ++k) {
            paths_[k].input = std::move(saved_inputs_i[k]);
            paths_[k].a1 = std::move(saved_a1_i[k]);
            paths_[k].p1 = std::move(saved_p1_i[k]);
            paths_[k].a2 = std::move(saved_a2_i[k]);
            paths_[k].am1 = std::move(saved_am1_i[k]);
            paths_[k].am2 = std::move(saved_am2_i[k]);
        }
        fcF_.backward(sti.h0.data(), gzF_i.data(), g_h0_.data());
        off = 0;
        for (auto& p : paths_) {
            p.backward(g_h0_.data() + off);
            off += p.flat_dim;
        }
        return loss;
    }

    std::vector<std::span<T>>& param_blocks() { return params_; }
    std::vector<std::span<T>>& grad_blocks() { return grads_; }

    void zero_grads() {
        for (auto g : grads_)
            for (auto& x : g) x = T(0);
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& p : params_) n += p.size();
        return n;
    }

private:
    void collect_blocks() {
        params_.clear();
        grads_.clear();
        for (auto& p : paths_) p.collect(params_, grads_);
        params_.emplace_back(fcF_.w);
        grads_.emplace_back(fcF_.gw);
        params_.emplace_back(fcF_.b);
        grads_.emplace_back(fcF_.gb);
        params_.emplace_back(fcS1_.w);
        grads_.emplace_back(fcS1_.gw);
        params_.emplace_back(fcS1_.b);
        grads_.emplace_back(fcS1_.gb);
        params_.emplace_back(fcS2_.w);
        grads_.emplace_back(fcS2_.gw);
        params_.emplace_back(fcS2_.b);
        grads_.emplace_back(fcS2_.gb);
    }

    PatchGeometry geom_;
    double d_scale_;
    std::vector<detail::Pathway<T>> paths_;
    Dense<T> fcF_, fcS1_, fcS2_;
    std::vector<T> h0_, g_h0_, sim_in_, g_sim_in_, s1_, g_s1_;
    std::vector<std::span<T>> params_, grads_;
};

// ---------------------------------------------------------------------------
// SGD with momentum, coupled weight decay and stepped learning-rate decay.
// ---------------------------------------------------------------------------
template <typename T>
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<std::span<T>>& params, std::vector<std::span<T>>& grads,
                 const TrainConfig& cfg)
        : params_(params), grads_(grads), cfg_(cfg) {
        cfg_.validate();
        velocity_.resize(params.size());
        for (size_t b = 0; b < params.size(); ++b)
            velocity_[b].assign(params[b].size(), T(0));
    }

    double current_lr() const {
        return cfg_.learning_rate * std::pow(cfg_.lr_decay, iteration_ / cfg_.lr_step_iters);
    }

    long iteration() const { return iteration_; }

    // Gradients are expected to hold the mean data gradient of the batch.
    void step() {
        const T lr = static_cast<T>(current_lr());
        const T mu = static_cast<T>(cfg_.momentum);
        const T wd = static_cast<T>(cfg_.weight_decay);
        for (size_t b = 0; b < params_.size(); ++b) {
            auto p = params_[b];
            auto g = grads_[b];
            auto& v = velocity_[b];
            for (size_t i = 0; i < p.size(); ++i) {
                v[i] = mu * v[i] + g[i] + wd * p[i];
                p[i] -= lr * v[i];
            }
        }
        ++iteration_;
    }

private:
    std::vector<std::span<T>>& params_;
    std::vector<std::span<T>>& grads_;
    TrainConfig cfg_;
    std::vector<std::vector<T>> velocity_;
    long iteration_ = 0;
};

namespace detail {

template <typename T, typename Net, typename Sample, typename LossFn>
double run_epoch(Net& net, SgdOptimizer<T>& opt, const std::vector<Sample>& data,
                 int batch_size, Rng& rng, LossFn&& loss_fn) {
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0.0;
    size_t pos = 0;
    while (pos < order.size()) {
        const size_t take = std::min(static_cast<size_t>(batch_size), order.size() - pos);
        net.zero_grads();
        double batch_loss = 0.0;
        for (size_t k = 0; k < take; ++k)
            batch_loss += static_cast<double>(loss_fn(net, data[order[pos + k]]));
        const T inv = static_cast<T>(1.0 / static_cast<double>(take));
        for (auto g : net.grad_blocks())
            for (auto& x : g) x *= inv;
        opt.step();
        epoch_loss += batch_loss;
        pos += take;
    }
    return epoch_loss / static_cast<double>(data.size());
}

}  // namespace detail

/// Epoch-at-a-time trainer so callers can refresh the sample set between
/// epochs (fresh random shifts). train_tnet/train_nnet below run the fixed
/// dataset variant.
template <typename T>
class TNetTrainer {
public:
    TNetTrainer(TNet<T>& net, const TrainConfig& cfg)
        : net_(net), cfg_(cfg), opt_(net.param_blocks(), net.grad_blocks(), cfg),
          rng_(Rng::mix(cfg.seed ^ 0x71AEull)) {}

    double run_epoch(const std::vector<TrainingSample>& data) {
        const double loss = detail::run_epoch(
            net_, opt_, data, cfg_.batch_size, rng_,
            [](TNet<T>& n, const TrainingSample& s) { return n.loss_and_grad(s.msp, s.label); });
        trace_.push_back(loss);
        if (!std::isfinite(loss))
            throw std::runtime_error("T-NET training diverged (loss trace: " +
                                     trace_string() + ")");
        return loss;
    }

    const std::vector<double>& loss_trace() const { return trace_; }
    long iteration() const { return opt_.iteration(); }
    double current_lr() const { return opt_.current_lr(); }

private:
    std::string trace_string() const {
        std::string s;
        for (double l : trace_) s += std::to_string(l) + " ";
        return s;
    }
    TNet<T>& net_;
    TrainConfig cfg_;
    SgdOptimizer<T> opt_;
    Rng rng_;
    std::vector<double> trace_;
};

template <typename T>
class NNetTrainer {
public:
    NNetTrainer(NNet<T>& net, const TrainConfig& cfg)
        : net_(net), cfg_(cfg), opt_(net.param_blocks(), net.grad_blocks(), cfg),
          rng_(Rng::mix(cfg.seed ^ 0x52B6ull)) {}

    double run_epoch(const std::vector<PairSample>& data) {
        const double loss = detail::run_epoch(
            net_, opt_, data, cfg_.batch_size, rng_,
            [](NNet<T>& n, const PairSample& s) { return n.loss_and_grad(s); });
        trace_.push_back(loss);
        if (!std::isfinite(loss))
            throw std::runtime_error("N-NET training diverged");
        return loss;
    }

    const std::vector<double>& loss_trace() const { return trace_; }
    long iteration() const { return opt_.iteration(); }
    double current_lr() const { return opt_.current_lr(); }

private:
    NNet<T>& net_;
    TrainConfig cfg_;
    SgdOptimizer<T> opt_;
    Rng rng_;
    std::vector<double> trace_;
};

template <typename T>
std::vector<double> train_tnet(TNet<T>& net, const std::vector<TrainingSample>& data,
                               const TrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("empty training set");
    TNetTrainer<T> trainer(net, cfg);
    for (int e = 0; e < cfg.epochs; ++e) trainer.run_epoch(data);
    return trainer.loss_trace();
}

template <typename T>
std::vector<double> train_nnet(NNet<T>& net, const std::vector<PairSample>& data,
                               const TrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("empty training set");
    NNetTrainer<T> trainer(net, cfg);
    for (int e = 0; e < cfg.epochs; ++e) trainer.run_epoch(data);
    return trainer.loss_trace();
}

// ---------------------------------------------------------------------------
// Gradient verification against central finite differences (double networks).
// ---------------------------------------------------------------------------
namespace detail {

// accumulate_grad fills analytic gradients once; pure_loss re-evaluates the
// loss without touching them. Probes n_checks randomly chosen parameters.
template <typename Net, typename GradFn, typename LossFn>
double max_fd_error(Net& net, GradFn&& accumulate_grad, LossFn&& pure_loss,
                    int n_checks, uint64_t seed, double h) {
    net.zero_grads();
    accumulate_grad();

    auto& params = net.param_blocks();
    auto& grads = net.grad_blocks();
    std::vector<std::pair<size_t, size_t>> index;  // (block, offset)
    for (size_t b = 0; b < params.size(); ++b)
        for (size_t i = 0; i < params[b].size(); ++i) index.emplace_back(b, i);

    Rng rng(seed);
    double worst = 0.0;
    for (int k = 0; k < n_checks; ++k) {
        const auto [b, i] = index[rng.below(index.size())];
        const double analytic = grads[b][i];
        const double w0 = params[b][i];
        params[b][i] = w0 + h;
        const double lp = pure_loss();
        params[b][i] = w0 - h;
        const double lm = pure_loss();
        params[b][i] = w0;
        const double numeric = (lp - lm) / (2.0 * h);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
    return worst;
}

}  // namespace detail

inline double gradient_check_tnet(TNet<double>& net, const TrainingSample& sample,
                                  int n_checks = 200, uint64_t seed = 17,
                                  double h = 1e-5) {
    auto pure_loss = [&]() {
        const auto p = net.forward(sample.msp);
        const double d = p[0] - sample.label;
        return d * d;
    };
    auto accumulate = [&]() { net.loss_and_grad(sample.msp, sample.label); };
    return detail::max_fd_error(net, accumulate, pure_loss, n_checks, seed, h);
}

inline double gradient_check_nnet(NNet<double>& net, const PairSample& sample,
                                  int n_checks = 200, uint64_t seed = 17,
                                  double h = 1e-5) {
    auto pure_loss = [&]() {
        const double m = net.forward(sample.a, sample.b, sample.distance_mm);
        const double d = m - sample.same_label;
        return d * d;
    };
    auto accumulate = [&]() { net.loss_and_grad(sample); };
    return detail::max_fd_error(net, accumulate, pure_loss, n_checks, seed, h);
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned little-endian binary with a geometry echo so a
// mismatched patch configuration is caught at load time.
// ---------------------------------------------------------------------------
namespace detail {

inline void put_ckpt_header(std::ofstream& f, char type, const PatchGeometry& geom) {
    f.write("LNCK", 4);
    const uint32_t version = 1;
    f.write(reinterpret_cast<const char*>(&version), 4);
    f.put(type);
    const int32_t sizes[4] = {geom.size[0], geom.size[1], geom.size[2], geom.n_scales};
    f.write(reinterpret_cast<const char*>(sizes), sizeof(sizes));
    f.write(reinterpret_cast<const char*>(&geom.base_spacing_mm), 8);
    for (double sp : geom.scale_spacings()) {
        const double m = sp / geom.base_spacing_mm;
        f.write(reinterpret_cast<const char*>(&m), 8);
    }
}

inline PatchGeometry get_ckpt_header(std::ifstream& f, char expect_type) {
    char magic[4];
    f.read(magic, 4);
    if (std::string(magic, 4) != "LNCK")
        throw std::runtime_error("bad checkpoint magic");
    uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    if (version != 1) throw std::runtime_error("unsupported checkpoint version");
    const char type = static_cast<char>(f.get());
    if (type != expect_type)
        throw std::runtime_error(std::string("checkpoint type mismatch: expected ") +
                                 expect_type + ", found " + type);
    PatchGeometry geom;
    int32_t sizes[4];
    f.read(reinterpret_cast<char*>(sizes), sizeof(sizes));
    geom.size = {sizes[0], sizes[1], sizes[2]};
    geom.n_scales = sizes[3];
    f.read(reinterpret_cast<char*>(&geom.base_spacing_mm), 8);
    geom.multipliers.resize(geom.n_scales);
    for (auto& m : geom.multipliers) f.read(reinterpret_cast<char*>(&m), 8);
    return geom;
}

template <typename Net>
void write_params(std::ofstream& f, Net& net) {
    for (auto block : net.param_blocks())
        f.write(reinterpret_cast<const char*>(block.data()),
                static_cast<std::streamsize>(block.size() * sizeof(float)));
}

template <typename Net>
void read_params(std::ifstream& f, Net& net, const std::string& path) {
    for (auto block : net.param_blocks())
        f.read(reinterpret_cast<char*>(block.data()),
               static_cast<std::streamsize>(block.size() * sizeof(float)));
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
}

}  // namespace detail

inline void save_tnet(TNet<float>& net, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path.string());
    detail::put_ckpt_header(f, 'T', net.geometry());
    detail::write_params(f, net);
}

inline TNet<float> load_tnet(const std::filesystem::path& path,
                             const PatchGeometry* expect = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
    const auto geom = detail::get_ckpt_header(f, 'T');
    if (expect && !(geom == *expect))
        throw std::runtime_error("checkpoint geometry mismatch: " + path.string());
    TNet<float> net(geom, 0);
    detail::read_params(f, net, path.string());
    return net;
}

inline void save_nnet(NNet<float>& net, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path.string());
    detail::put_ckpt_header(f, 'N', net.geometry());
    const double ds = net.distance_scale();
    f.write(reinterpret_cast<const char*>(&ds), 8);
    detail::write_params(f, net);
}

inline NNet<float> load_nnet(const std::filesystem::path& path,
                             const PatchGeometry* expect = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
    const auto geom = detail::get_ckpt_header(f, 'N');
    if (expect && !(geom == *expect))
        throw std::runtime_error("checkpoint geometry mismatch: " + path.string());
    double ds = 1.0;
    f.read(reinterpret_cast<char*>(&ds), 8);
    NNet<float> net(geom, 0, ds);
    detail::read_params(f, net, path.string());
    return net;
}

}  // namespace lascar
