#include "tvssm/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tvssm/errors.hpp"
#include "tvssm/rng.hpp"
#include "tvssm/serialize.hpp"

namespace tvssm {

void TrainConfig::validate() const {
    if (epochs == 0) throw InvalidArgument("train: epochs must be >= 1");
    if (batch_size == 0) throw InvalidArgument("train: batch_size must be >= 1");
    if (!(lr_ssm >= 0.0) || !(lr_others >= 0.0)) throw InvalidArgument("train: learning rates must be >= 0");
    if (!(wd_ssm >= 0.0) || !(wd_others >= 0.0)) throw InvalidArgument("train: weight decay must be >= 0");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
        throw InvalidArgument("train: warmup_fraction must be in [0, 1)");
    if (!(projection_eps > 0.0)) throw InvalidArgument("train: projection_eps must be > 0");
    if (eval_batch == 0) throw InvalidArgument("train: eval_batch must be >= 1");
}

double loss_mse(const SequenceBatch& pred, const SequenceBatch& target) {
    if (!pred.same_shape(target)) throw InvalidArgument("loss_mse: prediction and target shapes differ");
    if (pred.data.empty()) throw InvalidArgument("loss_mse: empty batch");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        sum += d * d;
    }
    return sum / static_cast<double>(pred.data.size());
}

SequenceBatch loss_mse_gradient(const SequenceBatch& pred, const SequenceBatch& target) {
    if (!pred.same_shape(target)) throw InvalidArgument("loss_mse: prediction and target shapes differ");
    SequenceBatch g(pred.batch, pred.channels, pred.steps);
    const double scale = 2.0 / static_cast<double>(pred.data.size());
    for (std::size_t i = 0; i < pred.data.size(); ++i) g.data[i] = scale * (pred.data[i] - target.data[i]);
    return g;
}

LossAndGradients bptt_gradients(const NetworkParams& params, const SequenceBatch& inputs,
                                const SequenceBatch& targets) {
    ForwardCache cache;
    const auto pred = network_forward(params, inputs, Mode::Train, &cache);
    LossAndGradients out{loss_mse(pred, targets), GradientSet::zeros_like(params)};
    network_backward(params, cache, loss_mse_gradient(pred, targets), out.grads.tensors);
    return out;
}

double training_loss(const NetworkParams& params, const SequenceBatch& inputs, const SequenceBatch& targets) {
    return loss_mse(network_forward(params, inputs, Mode::Train), targets);
}

FdReport fd_compare(const NetworkParams& params, const SequenceBatch& inputs, const SequenceBatch& targets,
                    const GradientSet& analytic, double step, double tolerance) {
    FdReport report;
    if (step > 1e-3) {
        report.warnings.push_back("step " + std::to_string(step) +
                                  " is large; central-difference truncation error may dominate");
    }
    NetworkParams probe = params;
    auto views = trainable_tensors(probe);
    const auto grads = trainable_tensors(analytic.tensors);
    if (views.size() != grads.size()) throw InvalidArgument("fd_compare: gradient set is not congruent");
    for (std::size_t v = 0; v < views.size(); ++v) {
        auto& values = views[v].values;
        if (grads[v].values.size() != values.size()) throw InvalidArgument("fd_compare: tensor size mismatch");
        FdTensorReport tr{views[v].name, values.size()};
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double orig = values[i];
            values[i] = orig + step;
            const double lp = training_loss(probe, inputs, targets);
            values[i] = orig - step;
            const double lm = training_loss(probe, inputs, targets);
            values[i] = orig;
            const double fd = (lp - lm) / (2.0 * step);
            const double an = grads[v].values[i];
            const double abs_err = std::fabs(an - fd);
            const double rel = abs_err / std::max({std::fabs(an), std::fabs(fd), kFdMagnitudeFloor});
            if (rel > tr.max_rel_error || !std::isfinite(rel)) {
                tr.max_rel_error = rel;
                tr.worst_index = i;
            }
            tr.max_abs_error = std::max(tr.max_abs_error, abs_err);
        }
        tr.flagged = !(tr.max_rel_error <= tolerance);
        report.max_rel_error = std::max(report.max_rel_error, tr.max_rel_error);
        report.passed = report.passed && !tr.flagged;
        report.tensors.push_back(tr);
    }
    return report;
}

FdReport fd_check(const NetworkParams& params, const SequenceBatch& inputs, const SequenceBatch& targets,
                  double step, double tolerance) {
    const auto lg = bptt_gradients(params, inputs, targets);
    return fd_compare(params, inputs, targets, lg.grads, step, tolerance);
}

void adamw_step(NetworkParams& params, const GradientSet& grads, AdamState& state, const AdamHyper& hyper) {
    auto p = trainable_tensors(params);
    const auto g = trainable_tensors(grads.tensors);
    auto m = trainable_tensors(state.m.tensors);
    auto v = trainable_tensors(state.v.tensors);
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
        throw InvalidArgument("adamw_step: optimizer state is not congruent with the parameters");
    for (const auto& t : g)
        for (double x : t.values)
            if (!std::isfinite(x)) throw NumericFailure("non-finite gradient in tensor " + t.name);

    state.step += 1;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    for (std::size_t ti = 0; ti < p.size(); ++ti) {
        const auto& gh = p[ti].group == ParamGroup::SSM ? hyper.ssm : hyper.others;
        auto pv = p[ti].values;
        const auto gv = g[ti].values;
        auto mv = m[ti].values;
        auto vv = v[ti].values;
        for (std::size_t i = 0; i < pv.size(); ++i) {
            pv[i] *= 1.0 - gh.lr * gh.wd;
            mv[i] = hyper.beta1 * mv[i] + (1.0 - hyper.beta1) * gv[i];
            vv[i] = hyper.beta2 * vv[i] + (1.0 - hyper.beta2) * gv[i] * gv[i];
            const double mhat = mv[i] / bc1;
            const double vhat = vv[i] / bc2;
            pv[i] -= gh.lr * mhat / (std::sqrt(vhat) + hyper.eps);
        }
    }
}

double lr_schedule(std::size_t step, std::size_t total_steps, double base_lr, double warmup_fraction) {
    if (total_steps == 0) return base_lr;
    const auto warmup = static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
    if (warmup > 0 && step <= warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
    const double span = static_cast<double>(total_steps - warmup);
    const double progress = std::min(1.0, static_cast<double>(step - warmup) / span);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::size_t project_network(NetworkParams& params, double eps) {
    std::size_t count = 0;
    for (auto& layer : params.layers)
        for (auto& nr : layer.neurons)
            if (nr.A.diagonal && stability_project(nr.A, eps)) ++count;
    return count;
}

SequenceBatch segment_sequences(const SequenceBatch& seqs, std::size_t segment_length) {
    if (segment_length == 0 || segment_length >= seqs.steps) return seqs;
    if (seqs.steps % segment_length != 0)
        throw InvalidArgument("sequence length " + std::to_string(seqs.steps) + " is not a multiple of segment length " +
                              std::to_string(segment_length));
    const std::size_t S = seqs.steps / segment_length;
    SequenceBatch out(seqs.batch * S, seqs.channels, segment_length);
    for (std::size_t b = 0; b < seqs.batch; ++b)
        for (std::size_t k = 0; k < S; ++k)
            for (std::size_t c = 0; c < seqs.channels; ++c) {
                const auto src = seqs.channel(b, c);
                std::copy_n(src.data() + k * segment_length, segment_length, out.channel(b * S + k, c).data());
            }
    return out;
}

TrainData make_train_data(const SequenceBatch& inputs, const SequenceBatch& targets, std::size_t segment_length) {
    if (inputs.batch != targets.batch || inputs.steps != targets.steps)
        throw InvalidArgument("inputs and targets disagree in batch size or length");
    TrainData d{segment_sequences(inputs, segment_length), segment_sequences(targets, segment_length), 1};
    if (segment_length > 0 && segment_length < inputs.steps) d.segments_per_stream = inputs.steps / segment_length;
    return d;
}

namespace {

SequenceBatch gather(const SequenceBatch& src, const std::vector<std::size_t>& rows) {
    SequenceBatch out(rows.size(), src.channels, src.steps);
    const std::size_t sz = src.sample_size();
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(src.sample(rows[i]), sz, out.sample(i));
    return out;
}

void scatter(SequenceBatch& dst, const SequenceBatch& src, const std::vector<std::size_t>& rows) {
    const std::size_t sz = src.sample_size();
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(src.sample(i), sz, dst.sample(rows[i]));
}

// Predicts segmented data; rows are stream-major with S consecutive segments per stream.
SequenceBatch predict_segmented(const NetworkParams& params, const SequenceBatch& segs, std::size_t S, bool carry,
                                std::size_t eval_batch) {
    SequenceBatch out(segs.batch, params.spec.output_channels, segs.steps);
    if (!carry || S <= 1) {
        for (std::size_t start = 0; start < segs.batch; start += eval_batch) {
            std::vector<std::size_t> rows(std::min(eval_batch, segs.batch - start));
            std::iota(rows.begin(), rows.end(), start);
            scatter(out, network_forward(params, gather(segs, rows), Mode::Eval), rows);
        }
        return out;
    }
    const std::size_t streams = segs.batch / S;
    for (std::size_t start = 0; start < streams; start += eval_batch) {
        const std::size_t count = std::min(eval_batch, streams - start);
        StateBank bank = StateBank::zeros(params.spec, count);
        for (std::size_t k = 0; k < S; ++k) {
            std::vector<std::size_t> rows(count);
            for (std::size_t i = 0; i < count; ++i) rows[i] = (start + i) * S + k;
            StateBank next;
            scatter(out, network_forward(params, gather(segs, rows), Mode::Eval, nullptr, &bank, &next), rows);
            bank = std::move(next);
        }
    }
    return out;
}

}  // namespace

SequenceBatch predict(const NetworkParams& params, const SequenceBatch& inputs, std::size_t eval_batch) {
    return predict_segmented(params, inputs, 1, false, eval_batch);
}

SequenceBatch predict_long(const NetworkParams& params, const SequenceBatch& inputs, std::size_t segment_length,
                           bool carry_state, std::size_t eval_batch) {
    if (segment_length == 0 || segment_length >= inputs.steps) return predict(params, inputs, eval_batch);
    const auto segs = segment_sequences(inputs, segment_length);
    const std::size_t S = inputs.steps / segment_length;
    const auto pred = predict_segmented(params, segs, S, carry_state, eval_batch);
    SequenceBatch out(inputs.batch, pred.channels, inputs.steps);
    for (std::size_t b = 0; b < inputs.batch; ++b)
        for (std::size_t k = 0; k < S; ++k)
            for (std::size_t c = 0; c < pred.channels; ++c)
                std::copy_n(pred.channel(b * S + k, c).data(), segment_length,
                            out.channel(b, c).data() + k * segment_length);
    return out;
}

double evaluate_loss(const NetworkParams& params, const TrainData& data, std::size_t eval_batch, bool carry_state) {
    const auto pred = predict_segmented(params, data.inputs, data.segments_per_stream, carry_state, eval_batch);
    return loss_mse(pred, data.targets);
}

TrainResult train(NetworkParams params, const TrainData& data, const TrainData* validation, const TrainConfig& cfg) {
    cfg.validate();
    if (data.inputs.batch == 0) throw InvalidArgument("train: empty training set");
    if (data.inputs.batch != data.targets.batch || data.inputs.steps != data.targets.steps)
        throw InvalidArgument("train: inputs and targets disagree in shape");

    const bool carry = cfg.carry_state && data.segments_per_stream > 1;
    const std::size_t S = carry ? data.segments_per_stream : 1;
    const std::size_t units = data.inputs.batch / S;  // shuffled units: segments, or whole streams
    const std::size_t batches_per_epoch = (units + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = cfg.epochs * batches_per_epoch * S;

    AdamState adam = AdamState::zeros_like(params);
    AdamHyper hyper;
    hyper.beta1 = cfg.beta1;
    hyper.beta2 = cfg.beta2;
    hyper.eps = cfg.adam_eps;

    TrainResult result;
    NetworkParams best = params;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t step = 0;

    auto fail = [&](const NetworkParams& last_good, const std::string& what) {
        if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, last_good);
        throw NumericFailure(what + " at step " + std::to_string(step) +
                             (cfg.checkpoint_path.empty() ? "" : "; last good parameters saved to " +
                                                                     cfg.checkpoint_path.string()));
    };

    std::vector<std::size_t> order(units);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(cfg.seed, 0x5348u, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t start = 0; start < units; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, units - start);
            StateBank bank = StateBank::zeros(params.spec, count);
            for (std::size_t k = 0; k < S; ++k) {
                std::vector<std::size_t> rows(count);
                for (std::size_t i = 0; i < count; ++i) rows[i] = order[start + i] * S + k;
                const auto x = gather(data.inputs, rows);
                const auto y = gather(data.targets, rows);

                project_network(params, cfg.projection_eps);
                double loss = 0.0;
                GradientSet grads = GradientSet::zeros_like(params);
                StateBank next;
                try {
                    ForwardCache cache;
                    const auto pred =
                        network_forward(params, x, Mode::Train, &cache, carry ? &bank : nullptr, carry ? &next : nullptr);
                    loss = loss_mse(pred, y);
                    if (!std::isfinite(loss)) throw NumericFailure("non-finite training loss");
                    network_backward(params, cache, loss_mse_gradient(pred, y), grads.tensors);
                    update_running_statistics(params, cache, cfg.norm_momentum);
                    hyper.ssm = {lr_schedule(step, total_steps, cfg.lr_ssm, cfg.warmup_fraction), cfg.wd_ssm};
                    hyper.others = {lr_schedule(step, total_steps, cfg.lr_others, cfg.warmup_fraction), cfg.wd_others};
                    adamw_step(params, grads, adam, hyper);
                } catch (const NumericFailure& e) {
                    fail(params, e.what());
                }
                if (carry) bank = std::move(next);
                loss_sum += loss * static_cast<double>(count);
                loss_count += count;
                ++step;
            }
        }

        EpochRecord rec{epoch, loss_sum / static_cast<double>(loss_count), std::numeric_limits<double>::quiet_NaN()};
        if (validation && validation->inputs.batch > 0) {
            NetworkParams projected = params;
            project_network(projected, cfg.projection_eps);
            rec.val_loss = evaluate_loss(projected, *validation, cfg.eval_batch, cfg.carry_state);
            if (rec.val_loss < best_val) {
                best_val = rec.val_loss;
                best = projected;
                result.best_epoch = epoch;
            }
        }
        result.history.push_back(rec);
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
            save_checkpoint(cfg.checkpoint_path, params);
    }

    if (validation && validation->inputs.batch > 0 && std::isfinite(best_val)) {
        result.params = std::move(best);
    } else {
        project_network(params, cfg.projection_eps);
        result.params = std::move(params);
        result.best_epoch = cfg.epochs - 1;
    }
    result.steps = step;
    return result;
}

TrainResult train(const NetworkSpec& spec, const TrainData& data, const TrainData* validation,
                  const TrainConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, 0x494e4954u));
    return train(init_network(spec, rng), data, validation, cfg);
}

std::string history_csv(const std::vector<EpochRecord>& history) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "epoch,train_loss,val_loss\n";
    for (const auto& r : history) {
        ss << r.epoch << ',' << r.train_loss << ',';
        if (std::isfinite(r.val_loss)) ss << r.val_loss;
        ss << '\n';
    }
    return ss.str();
}

}  // namespace tvssm
