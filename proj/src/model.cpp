#include "ktrace/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ktrace/rng.hpp"

namespace ktrace {

namespace {

constexpr double kProbClamp = 1e-7;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void tanh_inplace(Vec& v) {
    for (double& x : v) x = std::tanh(x);
}

// pre = W_xh x + W_hh h_prev + b_h for a two-hot input, in the same
// accumulation order as the dense matvec path (zero terms add exactly).
Vec rnn_preactivation(const Vec& h_prev, int interaction_index, int cluster_offset,
                      const ModelParams& params) {
    const Matrix& wxh = params.W_xh;
    Vec pre(wxh.rows, 0.0);
    for (int r = 0; r < wxh.rows; ++r) pre[r] = wxh(r, interaction_index);
    if (cluster_offset >= 0) {
        for (int r = 0; r < wxh.rows; ++r) pre[r] += wxh(r, cluster_offset);
    }
    Vec rec = matvec(params.W_hh, h_prev);
    for (int r = 0; r < wxh.rows; ++r) {
        pre[r] += rec[r];
        pre[r] += params.b_h[r];
    }
    return pre;
}

Vec concat_wvh(const Vec& w, const Vec& v, const Vec& h) {
    Vec u;
    u.reserve(w.size() + v.size() + h.size());
    u.insert(u.end(), w.begin(), w.end());
    u.insert(u.end(), v.begin(), v.end());
    u.insert(u.end(), h.begin(), h.end());
    return u;
}

Vec one_hot(int index, int n) {
    Vec v(n, 0.0);
    v[index] = 1.0;
    return v;
}

void check_step(const EncodedStep& step, const ModelParams& params) {
    const ModelDims& d = params.dims;
    if (static_cast<int>(step.input_vector.size()) < d.input_width(params.mode)) {
        throw std::invalid_argument("encoded step narrower than the model input");
    }
    if (step.interaction_index < 0 || step.interaction_index >= 2 * d.m) {
        throw std::out_of_range("interaction index outside the one-hot block");
    }
    if (step.exercise_id < 0 || step.exercise_id >= d.exercise_count) {
        throw std::out_of_range("exercise id outside the embedding matrix");
    }
}

}  // namespace

Mode mode_from_string(const std::string& name) {
    if (name == "dkt") return Mode::dkt;
    if (name == "dkt-a") return Mode::dkt_a;
    if (name == "aa-dkt") return Mode::aa_dkt;
    if (name == "aa-dkta") return Mode::aa_dkta;
    throw std::invalid_argument("unknown mode '" + name + "' (expected dkt|dkt-a|aa-dkt|aa-dkta)");
}

std::string mode_to_string(Mode mode) {
    switch (mode) {
        case Mode::dkt: return "dkt";
        case Mode::dkt_a: return "dkt-a";
        case Mode::aa_dkt: return "aa-dkt";
        case Mode::aa_dkta: return "aa-dkta";
    }
    return "dkt";
}

ModelParams init_params(const ModelDims& dims, Mode mode, std::uint64_t seed) {
    if (dims.d_k <= 0 || dims.d_h <= 0 || dims.m <= 0 || dims.concept_count <= 0 ||
        dims.exercise_count <= 0 || (cluster_enabled(mode) && dims.k_clusters <= 0)) {
        throw std::invalid_argument("model dimensions must be positive");
    }
    ModelParams params;
    params.mode = mode;
    params.dims = dims;

    Rng rng(mix_seed(seed, "init"));
    auto glorot = [&rng](Matrix& mat, int rows, int cols) {
        mat = Matrix(rows, cols);
        double s = std::sqrt(6.0 / (rows + cols));
        for (double& v : mat.data) v = rng.uniform(-s, s);
    };

    glorot(params.B, dims.d_k, dims.exercise_count);
    if (attention_enabled(mode)) {
        glorot(params.F_key, dims.d_k, dims.concept_count);
        glorot(params.F_val, dims.d_k, dims.concept_count);
    } else {
        glorot(params.W_read, dims.d_k, dims.d_h);
    }
    glorot(params.W_xh, dims.d_h, dims.input_width(mode));
    glorot(params.W_hh, dims.d_h, dims.d_h);
    params.b_h.assign(dims.d_h, 0.0);
    glorot(params.W1, dims.head_width(), 2 * dims.d_k + dims.d_h);
    params.b1.assign(dims.head_width(), 0.0);
    {
        Matrix w2;
        glorot(w2, 1, dims.head_width());
        params.W2 = w2.data;
    }
    params.b2 = 0.0;
    return params;
}

Vec rnn_step(const Vec& h_prev, const Vec& x_prev, const ModelParams& params) {
    if (static_cast<int>(h_prev.size()) != params.dims.d_h) {
        throw std::invalid_argument("hidden state size mismatch");
    }
    if (static_cast<int>(x_prev.size()) != params.W_xh.cols) {
        throw std::invalid_argument("input width mismatch: expected " +
                                    std::to_string(params.W_xh.cols) + ", got " +
                                    std::to_string(x_prev.size()));
    }
    Vec pre = matvec(params.W_xh, x_prev);
    Vec rec = matvec(params.W_hh, h_prev);
    for (std::size_t r = 0; r < pre.size(); ++r) {
        pre[r] += rec[r];
        pre[r] += params.b_h[r];
    }
    tanh_inplace(pre);
    return pre;
}

Vec attention_weights(const Vec& v, const Matrix& f_key) {
    Vec logits = matvec_t(f_key, v);
    double max_logit = logits[0];
    for (double s : logits) max_logit = std::max(max_logit, s);
    double total = 0.0;
    Vec alpha(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        alpha[i] = std::exp(logits[i] - max_logit);
        total += alpha[i];
    }
    for (double& a : alpha) a /= total;
    return alpha;
}

Vec mastery_read(const Vec& alpha, const Matrix& f_val) {
    return matvec(f_val, alpha);
}

void predict_step(const Vec& w, const Vec& v, const Vec& h, const ModelParams& params, Vec& p_out,
                  double& y_out) {
    Vec u = concat_wvh(w, v, h);
    p_out = matvec(params.W1, u);
    for (std::size_t r = 0; r < p_out.size(); ++r) p_out[r] += params.b1[r];
    tanh_inplace(p_out);
    y_out = sigmoid(dot(params.W2, p_out) + params.b2);
}

std::vector<StepOutput> forward_sequence(const std::vector<EncodedStep>& encoded,
                                         const ModelParams& params) {
    const ModelDims& dims = params.dims;
    const bool use_cluster = cluster_enabled(params.mode);
    const bool use_attention = attention_enabled(params.mode);

    std::vector<StepOutput> outputs;
    outputs.reserve(encoded.size());
    Vec h(dims.d_h, 0.0);
    for (std::size_t t = 0; t < encoded.size(); ++t) {
        const EncodedStep& step = encoded[t];
        check_step(step, params);
        if (t > 0) {
            const EncodedStep& prev = encoded[t - 1];
            int cluster_offset = use_cluster ? 2 * dims.m + prev.cluster_index : -1;
            Vec pre = rnn_preactivation(h, prev.interaction_index, cluster_offset, params);
            tanh_inplace(pre);
            h = std::move(pre);
        }
        StepOutput out;
        out.h = h;
        Vec v = params.B.col(step.exercise_id);
        if (use_attention) {
            out.alpha = params.attend_tagged_only
                            ? one_hot(step.skill_id, dims.concept_count)
                            : attention_weights(v, params.F_key);
            out.w = mastery_read(out.alpha, params.F_val);
        } else {
            out.w = matvec(params.W_read, h);
        }
        predict_step(out.w, v, h, params, out.p, out.y);
        outputs.push_back(std::move(out));
    }
    return outputs;
}

double sequence_loss(const std::vector<StepOutput>& outputs, const std::vector<int>& labels) {
    if (outputs.size() != labels.size()) {
        throw std::invalid_argument("outputs and labels differ in length");
    }
    double loss = 0.0;
    for (std::size_t t = 0; t < outputs.size(); ++t) {
        double y = std::min(1.0 - kProbClamp, std::max(kProbClamp, outputs[t].y));
        loss -= labels[t] == 1 ? std::log(y) : std::log(1.0 - y);
    }
    return loss;
}

Gradients Gradients::zeros_like(const ModelParams& params) {
    Gradients g;
    g.B = Matrix(params.B.rows, params.B.cols);
    g.F_key = Matrix(params.F_key.rows, params.F_key.cols);
    g.F_val = Matrix(params.F_val.rows, params.F_val.cols);
    g.W_read = Matrix(params.W_read.rows, params.W_read.cols);
    g.W_xh = Matrix(params.W_xh.rows, params.W_xh.cols);
    g.W_hh = Matrix(params.W_hh.rows, params.W_hh.cols);
    g.b_h.assign(params.b_h.size(), 0.0);
    g.W1 = Matrix(params.W1.rows, params.W1.cols);
    g.b1.assign(params.b1.size(), 0.0);
    g.W2.assign(params.W2.size(), 0.0);
    g.b2 = 0.0;
    return g;
}

namespace {

template <typename Fn>
void for_each_buffer(Gradients& g, Fn&& fn) {
    fn(g.B.data);
    fn(g.F_key.data);
    fn(g.F_val.data);
    fn(g.W_read.data);
    fn(g.W_xh.data);
    fn(g.W_hh.data);
    fn(g.b_h);
    fn(g.W1.data);
    fn(g.b1);
    fn(g.W2);
}

}  // namespace

void Gradients::add(const Gradients& other) {
    auto add_vec = [](Vec& dst, const Vec& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
    add_vec(B.data, other.B.data);
    add_vec(F_key.data, other.F_key.data);
    add_vec(F_val.data, other.F_val.data);
    add_vec(W_read.data, other.W_read.data);
    add_vec(W_xh.data, other.W_xh.data);
    add_vec(W_hh.data, other.W_hh.data);
    add_vec(b_h, other.b_h);
    add_vec(W1.data, other.W1.data);
    add_vec(b1, other.b1);
    add_vec(W2, other.W2);
    b2 += other.b2;
}

void Gradients::scale(double s) {
    for_each_buffer(*this, [s](Vec& buf) {
        for (double& v : buf) v *= s;
    });
    b2 *= s;
}

double Gradients::global_norm() const {
    double total = 0.0;
    auto acc = [&total](const Vec& buf) {
        for (double v : buf) total += v * v;
    };
    acc(B.data);
    acc(F_key.data);
    acc(F_val.data);
    acc(W_read.data);
    acc(W_xh.data);
    acc(W_hh.data);
    acc(b_h);
    acc(W1.data);
    acc(b1);
    acc(W2);
    total += b2 * b2;
    return std::sqrt(total);
}

void Gradients::clip_global_norm(double max_norm) {
    if (max_norm <= 0.0) return;
    double norm = global_norm();
    if (norm > max_norm) scale(max_norm / norm);
}

std::vector<TensorView> tensor_views(ModelParams& params) {
    std::vector<TensorView> views;
    views.push_back({"B", params.B.data.data(), params.B.size()});
    if (attention_enabled(params.mode)) {
        views.push_back({"F_key", params.F_key.data.data(), params.F_key.size()});
        views.push_back({"F_val", params.F_val.data.data(), params.F_val.size()});
    } else {
        views.push_back({"W_read", params.W_read.data.data(), params.W_read.size()});
    }
    views.push_back({"W_xh", params.W_xh.data.data(), params.W_xh.size()});
    views.push_back({"W_hh", params.W_hh.data.data(), params.W_hh.size()});
    views.push_back({"b_h", params.b_h.data(), params.b_h.size()});
    views.push_back({"W1", params.W1.data.data(), params.W1.size()});
    views.push_back({"b1", params.b1.data(), params.b1.size()});
    views.push_back({"W2", params.W2.data(), params.W2.size()});
    views.push_back({"b2", &params.b2, 1});
    return views;
}

std::vector<TensorView> tensor_views(Gradients& grads, Mode mode) {
    std::vector<TensorView> views;
    views.push_back({"B", grads.B.data.data(), grads.B.size()});
    if (attention_enabled(mode)) {
        views.push_back({"F_key", grads.F_key.data.data(), grads.F_key.size()});
        views.push_back({"F_val", grads.F_val.data.data(), grads.F_val.size()});
    } else {
        views.push_back({"W_read", grads.W_read.data.data(), grads.W_read.size()});
    }
    views.push_back({"W_xh", grads.W_xh.data.data(), grads.W_xh.size()});
    views.push_back({"W_hh", grads.W_hh.data.data(), grads.W_hh.size()});
    views.push_back({"b_h", grads.b_h.data(), grads.b_h.size()});
    views.push_back({"W1", grads.W1.data.data(), grads.W1.size()});
    views.push_back({"b1", grads.b1.data(), grads.b1.size()});
    views.push_back({"W2", grads.W2.data(), grads.W2.size()});
    views.push_back({"b2", &grads.b2, 1});
    return views;
}

Gradients backward_sequence(const std::vector<EncodedStep>& encoded, const std::vector<int>& labels,
                            const ModelParams& params, double* loss_out) {
    if (encoded.size() != labels.size()) {
        throw std::invalid_argument("encoded steps and labels differ in length");
    }
    const ModelDims& dims = params.dims;
    const bool use_cluster = cluster_enabled(params.mode);
    const bool use_attention = attention_enabled(params.mode);
    const std::size_t n = encoded.size();

    std::vector<StepOutput> outputs = forward_sequence(encoded, params);
    if (loss_out) *loss_out = sequence_loss(outputs, labels);

    Gradients g = Gradients::zeros_like(params);
    if (n == 0) return g;

    Vec carry(dims.d_h, 0.0);  // dL/dh_{t+1} routed through the recurrence
    for (std::size_t ti = n; ti-- > 0;) {
        const EncodedStep& step = encoded[ti];
        const StepOutput& out = outputs[ti];
        Vec v = params.B.col(step.exercise_id);

        double y = out.y;
        double dz = (y > kProbClamp && y < 1.0 - kProbClamp) ? y - labels[ti] : 0.0;

        // output head
        axpy(dz, out.p, g.W2);
        g.b2 += dz;
        Vec dp(params.W2.size());
        for (std::size_t i = 0; i < dp.size(); ++i) dp[i] = dz * params.W2[i];
        Vec da(dp.size());
        for (std::size_t i = 0; i < dp.size(); ++i) da[i] = dp[i] * (1.0 - out.p[i] * out.p[i]);
        Vec u = concat_wvh(out.w, v, out.h);
        add_outer(g.W1, da, u);
        for (std::size_t i = 0; i < da.size(); ++i) g.b1[i] += da[i];
        Vec du = matvec_t(params.W1, da);

        Vec dw(du.begin(), du.begin() + dims.d_k);
        Vec dv(du.begin() + dims.d_k, du.begin() + 2 * dims.d_k);
        Vec dh(du.begin() + 2 * dims.d_k, du.end());

        if (use_attention) {
            if (params.attend_tagged_only) {
                // alpha is a constant one-hot: gradient reaches only F_val
                for (int r = 0; r < dims.d_k; ++r) g.F_val(r, step.skill_id) += dw[r];
            } else {
                Vec dalpha = matvec_t(params.F_val, dw);
                add_outer(g.F_val, dw, out.alpha);
                double inner = dot(out.alpha, dalpha);
                Vec ds(dalpha.size());
                for (std::size_t i = 0; i < ds.size(); ++i) {
                    ds[i] = out.alpha[i] * (dalpha[i] - inner);
                }
                add_outer(g.F_key, v, ds);
                Vec dv_att = matvec(params.F_key, ds);
                for (int r = 0; r < dims.d_k; ++r) dv[r] += dv_att[r];
            }
        } else {
            add_outer(g.W_read, dw, out.h);
            Vec dh_read = matvec_t(params.W_read, dw);
            for (int r = 0; r < dims.d_h; ++r) dh[r] += dh_read[r];
        }

        for (int r = 0; r < dims.d_k; ++r) g.B(r, step.exercise_id) += dv[r];

        // recurrence: h_t = tanh(W_xh x_{t-1} + W_hh h_{t-1} + b_h), h_0 fixed
        for (int r = 0; r < dims.d_h; ++r) dh[r] += carry[r];
        if (ti >= 1) {
            const EncodedStep& prev = encoded[ti - 1];
            Vec dg(dims.d_h);
            for (int r = 0; r < dims.d_h; ++r) dg[r] = dh[r] * (1.0 - out.h[r] * out.h[r]);
            for (int r = 0; r < dims.d_h; ++r) g.W_xh(r, prev.interaction_index) += dg[r];
            if (use_cluster) {
                for (int r = 0; r < dims.d_h; ++r) {
                    g.W_xh(r, 2 * dims.m + prev.cluster_index) += dg[r];
                }
            }
            add_outer(g.W_hh, dg, outputs[ti - 1].h);
            for (int r = 0; r < dims.d_h; ++r) g.b_h[r] += dg[r];
            carry = matvec_t(params.W_hh, dg);
        } else {
            std::fill(carry.begin(), carry.end(), 0.0);
        }
    }

    for (const TensorView& view : tensor_views(g, params.mode)) {
        for (std::size_t i = 0; i < view.size; ++i) {
            if (!std::isfinite(view.data[i])) {
                throw std::runtime_error("non-finite gradient in tensor " + view.name);
            }
        }
    }
    return g;
}

}  // namespace ktrace
