#pragma once

#include <string>
#include <vector>

#include "eadnet/losses.hpp"
#include "eadnet/manifest.hpp"
#include "eadnet/metrics.hpp"
#include "eadnet/optim.hpp"

// Two-phase training protocol. Phase I trains the full edge network against
// ground-truth Canny maps with an optional adversarial assist; phase II
// freezes the edge network (any variant) and trains the deblur network on
// 4-channel inputs. Both loops are deterministic functions of (data, config).

namespace eadnet::train {

struct LoadedSample {
    Tensor<float> clear;   // [3,H,W] in [0,1]
    Tensor<float> blurry;  // [3,H,W] in [0,1]
    Tensor<float> edge;    // [H,W] in {0,1}
};

std::vector<LoadedSample> load_dataset(const data::Manifest& m);

struct Batch {
    Tensor<float> clear;   // [B,3,c,c]
    Tensor<float> blurry;  // [B,3,c,c]
    Tensor<float> edge;    // [B,1,c,c]
};

/// Samples `batch` aligned crops; the same window cuts all three images of a
/// pair. Too-small images are skipped with a stderr warning; if nothing
/// fits, that is a data error.
Batch random_crop_batch(const std::vector<LoadedSample>& data, i64 crop, i64 batch, Rng& rng);

struct StepLoss {
    i64 step = 0;
    double total = 0.0;
    std::vector<std::pair<std::string, double>> parts;
};
using History = std::vector<StepLoss>;

/// One line per step: `<step>\t<total>\t<name>=<value>...`.
std::string format_history(const History& h);

struct TrainEdgeConfig {
    optim::OptimConfig opt;
    losses::LossConfig loss;
    i64 epochs = 50;
    i64 max_steps = -1;           // >= 0 caps the run (smoke tests)
    std::string snapshot_path;    // where a NaN-abort dump goes, if nonempty
};

struct EdgeTrainResult {
    models::EdgeNet<float> net;
    models::Discriminator<float> disc;
    History history;
};

EdgeTrainResult train_edgenet(const std::vector<LoadedSample>& data, const TrainEdgeConfig& cfg);

struct TrainDeblurConfig {
    optim::OptimConfig opt;
    losses::LossConfig loss;
    models::DeblurConfig arch;
    std::string feature_kind = "conv3";
    int feature_layer = 1;
    i64 epochs = 50;
    i64 max_steps = -1;
    std::string snapshot_path;
};

struct DeblurTrainResult {
    models::DeblurNet<float> net;
    History history;
};

/// `edgenet` stays frozen (bit-identical before and after).
DeblurTrainResult train_deblurnet(const std::vector<LoadedSample>& data,
                                  const models::EdgeNet<float>& edgenet,
                                  const TrainDeblurConfig& cfg);

/// Full-resolution inference: reflect-pads to the size the networks need,
/// runs edge + deblur, crops back. blurry01 is [3,H,W] in [0,1]; so is the
/// result.
Tensor<float> deblur_image(const models::EdgeNet<float>& edgenet,
                           const models::DeblurNet<float>& deblur,
                           const Tensor<float>& blurry01);

/// Deblurs every manifest record and scores against the clear ground truth.
/// metric_names from {psnr, ssim, ms-ssim, mean-ssim}; psnr peak is 1.0.
metrics::MetricReport evaluate(const models::EdgeNet<float>& edgenet,
                               const models::DeblurNet<float>& deblur, const data::Manifest& m,
                               const std::vector<std::string>& metric_names);

/// Pads [C,H,W] on the bottom/right with reflected rows/columns so both
/// spatial dims are multiples of `mult`.
Tensor<float> reflect_pad_to(const Tensor<float>& t, i64 mult);

}  // namespace eadnet::train
