#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsit/losses.hpp"
#include "tsit/tensor.hpp"

namespace tsit {

class EvalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Gaussian moment fitting and the Frechet distance between two fits
// ---------------------------------------------------------------------------

struct GaussianFit {
    std::vector<double> mean;  // d
    std::vector<double> cov;   // d*d row-major, symmetric
    std::size_t dim = 0;
};

// Sample mean and covariance (n-1 divisor, symmetrized). Needs >= 2 samples.
GaussianFit fit_gaussian(const std::vector<std::vector<double>>& features);

// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), with the matrix square
// root taken through eigendecompositions of symmetric matrices; eigenvalues
// below 1e-10 are clamped to zero.
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

// ---------------------------------------------------------------------------
// Inception-style score over class-probability vectors
// ---------------------------------------------------------------------------

struct InceptionScore {
    double mean = 0.0;
    double stddev = 0.0;
};

// exp(mean_x KL(p(y|x) || p_bar(y))) per split; mean/std across splits.
// Every row must be a distribution: non-negative, summing to 1 within 1e-6.
InceptionScore inception_score(const std::vector<std::vector<double>>& probs,
                               std::size_t splits = 1);

// ---------------------------------------------------------------------------
// evaluation features and a small closed-form classifier
// ---------------------------------------------------------------------------

// Global average of the deepest extractor stage: one d-vector per image.
std::vector<double> eval_features(RandomFeatureExtractor<float>& extractor,
                                  const Tensor<float>& image);

// Ridge-regression readout to one-hot targets over evaluation features,
// solved in closed form (deterministic, no iterative training). probs() maps
// a feature vector to softmax class probabilities.
struct LinearClassifier {
    std::size_t in_dim = 0;
    std::size_t classes = 0;
    std::vector<double> w;  // classes x (in_dim + 1); last column is the bias

    std::vector<double> probs(const std::vector<double>& features) const;
};

LinearClassifier train_linear_classifier(const std::vector<std::vector<double>>& features,
                                         const std::vector<int>& labels, int num_classes,
                                         double ridge = 1e-3);

// ---------------------------------------------------------------------------
// directory-level evaluation report
// ---------------------------------------------------------------------------

struct EvalReport {
    double fid = 0.0;
    InceptionScore is;
    std::size_t n_generated = 0;
    std::size_t n_reference = 0;
    std::string extractor_id;
    std::string text;          // human-readable summary
    std::string machine_line;  // single line of metric=value pairs
};

EvalReport evaluate_run(const std::string& generated_dir, const std::string& reference_dir,
                        RandomFeatureExtractor<float>& extractor,
                        const LinearClassifier& classifier, std::size_t is_splits = 1);

}  // namespace tsit
