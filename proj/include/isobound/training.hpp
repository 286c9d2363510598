#pragma once

// Minibatch SGD with momentum for the small MLP classifiers, trained on
// freshly sampled (generator(z), label(z)) pairs.  Runs single-threaded and
// is bit-reproducible for a fixed seed.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "isobound/models.hpp"
#include "isobound/rng.hpp"

namespace isobound {

struct TrainingConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int batch_size = 100;
  int epochs = 20;
  int samples_per_epoch = 5000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) {
      throw std::invalid_argument("learning_rate must be positive");
    }
    if (momentum < 0.0 || momentum >= 1.0) {
      throw std::invalid_argument("momentum must lie in [0, 1)");
    }
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (samples_per_epoch < batch_size) {
      throw std::invalid_argument("samples_per_epoch must cover one batch");
    }
  }
};

struct TrainingResult {
  std::shared_ptr<MlpClassifier> classifier;
  double train_accuracy = 0.0;          // on a fresh held-out stream
  std::vector<double> epoch_losses;     // mean cross-entropy per epoch
};

namespace detail {

inline std::vector<double> softmax(const Vec& logits) {
  double top = logits[0];
  for (double v : logits) top = std::max(top, v);
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

}  // namespace detail

// Labels from the oracle are 1-based and must stay within widths.back().
inline TrainingResult train_mlp_classifier(
    const Generator& generator,
    const std::function<int(const Vec&)>& label_oracle,
    const std::vector<int>& widths, const TrainingConfig& config) {
  config.validate();
  if (widths.size() < 2) {
    throw std::invalid_argument("classifier needs input and output widths");
  }
  if (widths.front() != generator.image_dim()) {
    throw std::invalid_argument(
        "classifier input width must equal the generator image dim");
  }
  const int num_classes = widths.back();
  if (num_classes < 2) {
    throw std::invalid_argument("classifier needs at least 2 classes");
  }

  SubstreamRng init_rng(config.seed, Stream::kWeightInit, 0);
  MlpNet net = MlpNet::random(widths, init_rng);
  const std::size_t layers = net.layer_count();

  std::vector<Vec> velocity_w(layers), velocity_b(layers);
  std::vector<Vec> grad_w(layers), grad_b(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    velocity_w[l].assign(net.weight[l].data.size(), 0.0);
    velocity_b[l].assign(net.bias[l].size(), 0.0);
  }

  const int steps_per_epoch =
      (config.samples_per_epoch + config.batch_size - 1) / config.batch_size;
  std::uint64_t sample_counter = 0;
  std::vector<double> epoch_losses;
  epoch_losses.reserve(config.epochs);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    long long epoch_examples = 0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      for (std::size_t l = 0; l < layers; ++l) {
        grad_w[l].assign(net.weight[l].data.size(), 0.0);
        grad_b[l].assign(net.bias[l].size(), 0.0);
      }
      double batch_loss = 0.0;
      for (int b = 0; b < config.batch_size; ++b) {
        const Vec z = sample_latent_point(generator.latent_dim(), config.seed,
                                          Stream::kTraining, sample_counter++);
        const Vec x = generator.forward(z);
        const int label = label_oracle(z);
        if (label < 1 || label > num_classes) {
          throw std::invalid_argument("label oracle returned " +
                                      std::to_string(label) +
                                      ", outside 1.." +
                                      std::to_string(num_classes));
        }

        MlpNet::Trace trace;
        const Vec logits = net.forward(x, &trace);
        const auto probs = detail::softmax(logits);
        batch_loss += -std::log(std::max(probs[label - 1], 1e-300));

        Vec delta(probs.begin(), probs.end());
        delta[label - 1] -= 1.0;
        for (std::size_t l = layers; l-- > 0;) {
          const Vec& input = trace.post[l];
          Matrix& w = net.weight[l];
          for (std::size_t r = 0; r < w.rows; ++r) {
            for (std::size_t c = 0; c < w.cols; ++c) {
              grad_w[l][r * w.cols + c] += delta[r] * input[c];
            }
            grad_b[l][r] += delta[r];
          }
          if (l > 0) {
            Vec back = w.apply_transpose(delta);
            for (std::size_t i = 0; i < back.size(); ++i) {
              back[i] *= 1.0 - input[i] * input[i];
            }
            delta = std::move(back);
          }
        }
      }

      batch_loss /= config.batch_size;
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("training diverged at epoch " +
                            std::to_string(epoch) + ", step " +
                            std::to_string(step) + ": loss " +
                            std::to_string(batch_loss));
      }
      epoch_loss += batch_loss * config.batch_size;
      epoch_examples += config.batch_size;

      const double scale = 1.0 / config.batch_size;
      for (std::size_t l = 0; l < layers; ++l) {
        for (std::size_t i = 0; i < grad_w[l].size(); ++i) {
          velocity_w[l][i] = config.momentum * velocity_w[l][i] -
                             config.learning_rate * grad_w[l][i] * scale;
          net.weight[l].data[i] += velocity_w[l][i];
        }
        for (std::size_t i = 0; i < grad_b[l].size(); ++i) {
          velocity_b[l][i] = config.momentum * velocity_b[l][i] -
                             config.learning_rate * grad_b[l][i] * scale;
          net.bias[l][i] += velocity_b[l][i];
        }
      }
    }
    epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_examples));
  }

  TrainingResult result;
  result.classifier = std::make_shared<MlpClassifier>(std::move(net));
  result.epoch_losses = std::move(epoch_losses);

  const int eval_count = 10000;
  long long correct = 0;
  for (int i = 0; i < eval_count; ++i) {
    const Vec z = sample_latent_point(generator.latent_dim(), config.seed,
                                      Stream::kEval,
                                      static_cast<std::uint64_t>(i));
    if (result.classifier->classify(generator.forward(z)) == label_oracle(z)) {
      ++correct;
    }
  }
  result.train_accuracy = static_cast<double>(correct) / eval_count;
  return result;
}

}  // namespace isobound
