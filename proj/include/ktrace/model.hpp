#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ktrace/linalg.hpp"
#include "ktrace/types.hpp"

namespace ktrace {

/// Architecture variants. The attention read and the cluster input block can
/// be switched off independently; with both off the network is a plain
/// one-hot -> tanh recurrence -> sigmoid head predictor.
enum class Mode { dkt, dkt_a, aa_dkt, aa_dkta };

inline bool attention_enabled(Mode mode) { return mode == Mode::dkt_a || mode == Mode::aa_dkta; }
inline bool cluster_enabled(Mode mode) { return mode == Mode::aa_dkt || mode == Mode::aa_dkta; }

Mode mode_from_string(const std::string& name);  // "dkt" | "dkt-a" | "aa-dkt" | "aa-dkta"
std::string mode_to_string(Mode mode);

struct ModelDims {
    int d_k = 16;           // embedding width
    int d_h = 32;            // hidden width
    int m = 0;               // one-hot id count in the interaction block
    int k_clusters = 0;      // cluster block width
    int concept_count = 0;   // number of knowledge concepts
    int exercise_count = 0;  // columns of the exercise embedding matrix

    /// Width of the input slice the recurrent cell consumes.
    int input_width(Mode mode) const { return 2 * m + (cluster_enabled(mode) ? k_clusters : 0); }
    /// Width of the pre-sigmoid head activation.
    int head_width() const { return d_h; }
};

/// All learnable tensors. Attention modes carry concept key/value matrices;
/// non-attention modes replace the attention read with a linear read of the
/// hidden state (W_read).
struct ModelParams {
    Mode mode = Mode::aa_dkta;
    ModelDims dims;
    bool attend_tagged_only = false;  // restrict attention to the exercise's own concept

    Matrix B;       // d_k x exercise_count, exercise embeddings
    Matrix F_key;   // d_k x concept_count (attention modes)
    Matrix F_val;   // d_k x concept_count (attention modes)
    Matrix W_read;  // d_k x d_h          (non-attention modes)
    Matrix W_xh;    // d_h x input_width
    Matrix W_hh;    // d_h x d_h
    Vec b_h;        // d_h
    Matrix W1;      // d_h x (2*d_k + d_h)
    Vec b1;         // d_h
    Vec W2;         // d_h
    double b2 = 0.0;
};

/// Gradient of the sequence loss w.r.t. every ModelParams tensor.
struct Gradients {
    Matrix B, F_key, F_val, W_read, W_xh, W_hh;
    Vec b_h;
    Matrix W1;
    Vec b1, W2;
    double b2 = 0.0;

    static Gradients zeros_like(const ModelParams& params);
    void add(const Gradients& other);
    void scale(double s);
    double global_norm() const;
    /// Rescales all tensors so the global norm is at most max_norm.
    /// No-op when max_norm <= 0.
    void clip_global_norm(double max_norm);
};

/// Named view over a parameter/gradient tensor, for generic iteration
/// (SGD updates, checkpoints, finite-difference sweeps).
struct TensorView {
    std::string name;
    double* data;
    std::size_t size;
};

/// Views over the tensors active in params.mode, in a fixed order.
std::vector<TensorView> tensor_views(ModelParams& params);
std::vector<TensorView> tensor_views(Gradients& grads, Mode mode);

/// Everything the forward pass produces for one step.
struct StepOutput {
    Vec h;        // hidden state used at this step
    Vec alpha;    // attention weights over concepts (empty in non-attention modes)
    Vec w;        // mastery read
    Vec p;        // head activation
    double y = 0.5;  // predicted probability of a correct answer
};

/// Glorot-uniform weights, zero biases, reproducible from seed.
ModelParams init_params(const ModelDims& dims, Mode mode, std::uint64_t seed);

/// h_t = tanh(W_xh x + W_hh h_prev + b_h). x must have exactly
/// params.dims.input_width(mode) entries.
Vec rnn_step(const Vec& h_prev, const Vec& x_prev, const ModelParams& params);

/// Softmax over the inner products of the exercise embedding with every
/// concept key column, computed with max subtraction.
Vec attention_weights(const Vec& v, const Matrix& f_key);

/// w = sum_i alpha[i] * F_val(:, i)
Vec mastery_read(const Vec& alpha, const Matrix& f_val);

/// p = tanh(W1 [w; v; h] + b1), y = sigmoid(W2 p + b2).
void predict_step(const Vec& w, const Vec& v, const Vec& h, const ModelParams& params, Vec& p_out,
                  double& y_out);

/// Runs the recurrence over a chunk. The prediction for step t uses the
/// hidden state built from inputs 0..t-1 plus the embedding of step t's
/// exercise; step 0 starts from the zero hidden state.
std::vector<StepOutput> forward_sequence(const std::vector<EncodedStep>& encoded,
                                         const ModelParams& params);

/// Summed binary cross-entropy over the chunk, probabilities clamped to
/// [1e-7, 1 - 1e-7] before the logs. Throws on length mismatch.
double sequence_loss(const std::vector<StepOutput>& outputs, const std::vector<int>& labels);

/// Exact backpropagation through time over the full chunk. Returns raw
/// (unclipped) gradients and writes the chunk loss to loss_out when non-null.
/// Throws std::runtime_error naming the tensor if any gradient is non-finite.
Gradients backward_sequence(const std::vector<EncodedStep>& encoded, const std::vector<int>& labels,
                            const ModelParams& params, double* loss_out = nullptr);

}  // namespace ktrace
