#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tvssm/network.hpp"

namespace tvssm {

struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t batch_size = 64;
    double lr_ssm = 1e-3;
    double lr_others = 1e-2;
    double wd_ssm = 0.0;
    double wd_others = 0.0;
    double warmup_fraction = 0.05;
    std::uint64_t seed = 0;
    std::size_t segment_length = 0;  // 0: train on full sequences
    bool carry_state = false;        // carry SSM state across consecutive segments of a sequence
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double projection_eps = 1e-4;
    double norm_momentum = 0.1;
    std::size_t eval_batch = 256;
    std::filesystem::path checkpoint_path;  // empty: no checkpoints
    std::size_t checkpoint_every = 0;       // epochs; 0: only on failure

    void validate() const;
};

// dL/dtheta for every trainable tensor, congruent with the parameters it was computed for.
struct GradientSet {
    NetworkParams tensors;

    static GradientSet zeros_like(const NetworkParams& params) { return {tvssm::zeros_like(params)}; }
};

double loss_mse(const SequenceBatch& pred, const SequenceBatch& target);
SequenceBatch loss_mse_gradient(const SequenceBatch& pred, const SequenceBatch& target);

struct LossAndGradients {
    double loss = 0.0;
    GradientSet grads;
};

// Train-mode forward, MSE loss, full reverse pass. Normalization running statistics are left untouched.
LossAndGradients bptt_gradients(const NetworkParams& params, const SequenceBatch& inputs,
                                const SequenceBatch& targets);

// Train-mode loss only (what bptt_gradients differentiates).
double training_loss(const NetworkParams& params, const SequenceBatch& inputs, const SequenceBatch& targets);

struct FdTensorReport {
    std::string name;
    std::size_t size = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
    bool flagged = false;
};

struct FdReport {
    std::vector<FdTensorReport> tensors;
    double max_rel_error = 0.0;
    bool passed = true;
    std::vector<std::string> warnings;
};

// Gradients smaller than this are compared on an absolute scale (central differences cannot resolve them).
inline constexpr double kFdMagnitudeFloor = 1e-4;

FdReport fd_compare(const NetworkParams& params, const SequenceBatch& inputs, const SequenceBatch& targets,
                    const GradientSet& analytic, double step = 1e-6, double tolerance = 1e-5);
FdReport fd_check(const NetworkParams& params, const SequenceBatch& inputs, const SequenceBatch& targets,
                  double step = 1e-6, double tolerance = 1e-5);

struct AdamState {
    GradientSet m, v;
    std::size_t step = 0;

    static AdamState zeros_like(const NetworkParams& params) {
        return {GradientSet::zeros_like(params), GradientSet::zeros_like(params), 0};
    }
};

struct GroupHyper {
    double lr = 0.0;
    double wd = 0.0;
};

struct AdamHyper {
    GroupHyper ssm;
    GroupHyper others;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Decoupled weight decay followed by the bias-corrected Adam update.
void adamw_step(NetworkParams& params, const GradientSet& grads, AdamState& state, const AdamHyper& hyper);

// Linear ramp to base_lr over round(warmup_fraction * total) steps, then cosine decay to 0 at total_steps.
double lr_schedule(std::size_t step, std::size_t total_steps, double base_lr, double warmup_fraction);

// Applies the diagonal-A stability projection to every neuron. Returns how many neurons were rescaled.
std::size_t project_network(NetworkParams& params, double eps);

struct TrainData {
    SequenceBatch inputs;
    SequenceBatch targets;
    std::size_t segments_per_stream = 1;  // consecutive segments of one sequence, used in carry-state mode
};

// Cuts every sequence into non-overlapping segments; sequence i yields rows [i*S, (i+1)*S).
SequenceBatch segment_sequences(const SequenceBatch& seqs, std::size_t segment_length);
TrainData make_train_data(const SequenceBatch& inputs, const SequenceBatch& targets, std::size_t segment_length);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;  // NaN when no validation data
};

struct TrainResult {
    NetworkParams params;
    std::vector<EpochRecord> history;
    std::size_t steps = 0;
    std::size_t best_epoch = 0;
};

TrainResult train(NetworkParams params, const TrainData& data, const TrainData* validation, const TrainConfig& cfg);
TrainResult train(const NetworkSpec& spec, const TrainData& data, const TrainData* validation,
                  const TrainConfig& cfg);

// Eval-mode prediction in chunks of eval_batch sequences.
SequenceBatch predict(const NetworkParams& params, const SequenceBatch& inputs, std::size_t eval_batch = 256);

// Predicts long sequences segment by segment (state reset per segment unless carry_state) and stitches the output.
SequenceBatch predict_long(const NetworkParams& params, const SequenceBatch& inputs, std::size_t segment_length,
                           bool carry_state, std::size_t eval_batch = 256);

double evaluate_loss(const NetworkParams& params, const TrainData& data, std::size_t eval_batch, bool carry_state);

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace tvssm
