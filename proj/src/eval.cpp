#include "tsit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "tsit/data.hpp"
#include "tsit/linalg.hpp"

namespace tsit {

namespace {

// V diag(f(lambda)) V^T for a symmetric matrix given by its eigendecomposition
std::vector<double> rebuild_sym(const std::vector<double>& eigvals,
                                const std::vector<double>& eigvecs, std::size_t n,
                                double (*f)(double)) {
    std::vector<double> out(n * n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double fv = f(eigvals[k]);
        if (fv == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) {
            const double vik = eigvecs[i * n + k] * fv;
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += vik * eigvecs[j * n + k];
        }
    }
    return out;
}

double clamped_sqrt(double x) { return x < 1e-10 ? 0.0 : std::sqrt(x); }

std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b,
                              std::size_t n) {
    std::vector<double> out(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = a[i * n + k];
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aik * b[k * n + j];
        }
    return out;
}

void check_finite_eigs(const std::vector<double>& eigvals) {
    for (double v : eigvals)
        if (!std::isfinite(v)) throw EvalError("eigensolve did not converge");
}

}  // namespace

GaussianFit fit_gaussian(const std::vector<std::vector<double>>& features) {
    if (features.size() < 2) throw EvalError("fit_gaussian needs at least 2 samples");
    const std::size_t n = features.size();
    const std::size_t d = features[0].size();
    for (const auto& f : features)
        if (f.size() != d) throw EvalError("fit_gaussian: inconsistent feature dimensions");

    GaussianFit g;
    g.dim = d;
    g.mean.assign(d, 0.0);
    for (const auto& f : features)
        for (std::size_t i = 0; i < d; ++i) g.mean[i] += f[i];
    for (auto& m : g.mean) m /= double(n);

    g.cov.assign(d * d, 0.0);
    for (const auto& f : features)
        for (std::size_t i = 0; i < d; ++i) {
            const double di = f[i] - g.mean[i];
            for (std::size_t j = i; j < d; ++j) g.cov[i * d + j] += di * (f[j] - g.mean[j]);
        }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            const double v = g.cov[i * d + j] / double(n - 1);
            g.cov[i * d + j] = g.cov[j * d + i] = v;  // symmetrized by construction
        }
    return g;
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
    if (a.dim != b.dim) throw EvalError("frechet_distance: dimension mismatch");
    const std::size_t d = a.dim;
    if (d == 0) throw EvalError("frechet_distance: empty fit");

    double mean_term = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a.mean[i] - b.mean[i];
        mean_term += diff * diff;
    }

    double trace_a = 0.0, trace_b = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        trace_a += a.cov[i * d + i];
        trace_b += b.cov[i * d + i];
    }

    // S = sqrtm(cov_a); M = S cov_b S is symmetric PSD and
    // Tr(sqrtm(cov_a cov_b)) = Tr(sqrtm(M)).
    std::vector<double> vals, vecs;
    jacobi_eigen_sym(a.cov, d, vals, vecs);
    check_finite_eigs(vals);
    const auto sqrt_a = rebuild_sym(vals, vecs, d, clamped_sqrt);

    auto m = matmul_sq(matmul_sq(sqrt_a, b.cov, d), sqrt_a, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) {
            const double v = 0.5 * (m[i * d + j] + m[j * d + i]);
            m[i * d + j] = m[j * d + i] = v;
        }
    jacobi_eigen_sym(std::move(m), d, vals, vecs);
    check_finite_eigs(vals);
    double trace_sqrt = 0.0;
    for (double v : vals) trace_sqrt += clamped_sqrt(v);

    return std::max(0.0, mean_term + trace_a + trace_b - 2.0 * trace_sqrt);
}

InceptionScore inception_score(const std::vector<std::vector<double>>& probs,
                               std::size_t splits) {
    if (probs.empty()) throw EvalError("inception_score: no probability vectors");
    if (splits == 0 || splits > probs.size())
        throw EvalError("inception_score: split count must be in [1, n]");
    const std::size_t k = probs[0].size();
    if (k == 0) throw EvalError("inception_score: empty distributions");
    for (const auto& p : probs) {
        if (p.size() != k) throw EvalError("inception_score: inconsistent class counts");
        double sum = 0.0;
        for (double v : p) {
            if (!(v >= 0.0)) throw EvalError("inception_score: negative probability");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw EvalError("inception_score: probabilities do not sum to 1");
    }

    const std::size_t n = probs.size();
    std::vector<double> scores;
    for (std::size_t g = 0; g < splits; ++g) {
        const std::size_t lo = g * n / splits, hi = (g + 1) * n / splits;
        std::vector<double> marginal(k, 0.0);
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t c = 0; c < k; ++c) marginal[c] += probs[i][c];
        for (auto& m : marginal) m /= double(hi - lo);

        double mean_kl = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            double kl = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                const double p = probs[i][c];
                if (p > 0.0) kl += p * (std::log(p) - std::log(marginal[c]));
            }
            mean_kl += kl;
        }
        scores.push_back(std::exp(mean_kl / double(hi - lo)));
    }

    InceptionScore out;
    for (double s : scores) out.mean += s;
    out.mean /= double(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - out.mean) * (s - out.mean);
    out.stddev = std::sqrt(var / double(scores.size()));
    return out;
}

std::vector<double> eval_features(RandomFeatureExtractor<float>& extractor,
                                  const Tensor<float>& image) {
    NoGradGuard<float> guard;
    const auto maps = extractor.extract(image);
    const auto& deep = maps.back();
    if (deep.dim(0) != 1) throw EvalError("eval_features expects a single image");
    const std::size_t c = deep.dim(1), hw = deep.dim(2) * deep.dim(3);
    std::vector<double> out(c, 0.0);
    const auto& v = deep.vec();
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < hw; ++i) s += double(v[ch * hw + i]);
        out[ch] = s / double(hw);
    }
    return out;
}

std::vector<double> LinearClassifier::probs(const std::vector<double>& features) const {
    if (features.size() != in_dim) throw EvalError("classifier feature dimension mismatch");
    std::vector<double> logits(classes, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
        double s = w[c * (in_dim + 1) + in_dim];  // bias
        for (std::size_t i = 0; i < in_dim; ++i) s += w[c * (in_dim + 1) + i] * features[i];
        logits[c] = s;
    }
    const double lmax = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (auto& l : logits) {
        l = std::exp(l - lmax);
        denom += l;
    }
    for (auto& l : logits) l /= denom;
    return logits;
}

LinearClassifier train_linear_classifier(const std::vector<std::vector<double>>& features,
                                         const std::vector<int>& labels, int num_classes,
                                         double ridge) {
    if (features.empty() || features.size() != labels.size())
        throw EvalError("classifier training needs matching features and labels");
    if (num_classes < 2) throw EvalError("classifier needs at least 2 classes");
    const std::size_t n = features.size(), d = features[0].size(), da = d + 1;
    for (const auto& f : features)
        if (f.size() != d) throw EvalError("classifier: inconsistent feature dimensions");
    for (int l : labels)
        if (l < 0 || l >= num_classes) throw EvalError("classifier: label out of range");

    // ridge solution W = (X^T X + ridge I)^{-1} X^T Y with an appended 1s column
    std::vector<double> xtx(da * da, 0.0), xty(da * std::size_t(num_classes), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        auto xi = [&](std::size_t i) { return i < d ? features[s][i] : 1.0; };
        for (std::size_t i = 0; i < da; ++i) {
            for (std::size_t j = i; j < da; ++j) xtx[i * da + j] += xi(i) * xi(j);
            xty[i * std::size_t(num_classes) + std::size_t(labels[s])] += xi(i);
        }
    }
    for (std::size_t i = 0; i < da; ++i) {
        for (std::size_t j = i + 1; j < da; ++j) xtx[j * da + i] = xtx[i * da + j];
        xtx[i * da + i] += ridge;
    }

    std::vector<double> vals, vecs;
    jacobi_eigen_sym(xtx, da, vals, vecs);
    check_finite_eigs(vals);
    // inverse through the eigendecomposition (all eigenvalues >= ridge > 0)
    std::vector<double> inv(da * da, 0.0);
    for (std::size_t k = 0; k < da; ++k) {
        const double iv = 1.0 / vals[k];
        for (std::size_t i = 0; i < da; ++i) {
            const double vik = vecs[i * da + k] * iv;
            for (std::size_t j = 0; j < da; ++j) inv[i * da + j] += vik * vecs[j * da + k];
        }
    }

    LinearClassifier clf;
    clf.in_dim = d;
    clf.classes = std::size_t(num_classes);
    clf.w.assign(clf.classes * da, 0.0);
    for (std::size_t c = 0; c < clf.classes; ++c)
        for (std::size_t i = 0; i < da; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < da; ++j)
                s += inv[i * da + j] * xty[j * clf.classes + c];
            clf.w[c * da + i] = s;
        }
    return clf;
}

EvalReport evaluate_run(const std::string& generated_dir, const std::string& reference_dir,
                        RandomFeatureExtractor<float>& extractor,
                        const LinearClassifier& classifier, std::size_t is_splits) {
    const auto gen_paths = list_images(generated_dir);
    const auto ref_paths = list_images(reference_dir);
    if (gen_paths.empty()) throw EvalError("no images in '" + generated_dir + "'");
    if (ref_paths.empty()) throw EvalError("no images in '" + reference_dir + "'");

    auto load_features = [&](const std::vector<std::string>& paths) {
        std::vector<std::vector<double>> feats;
        for (const auto& p : paths)
            feats.push_back(eval_features(extractor, image_to_tensor<float>(read_image(p))));
        return feats;
    };
    const auto gen_feats = load_features(gen_paths);
    const auto ref_feats = load_features(ref_paths);

    EvalReport report;
    report.n_generated = gen_paths.size();
    report.n_reference = ref_paths.size();
    report.extractor_id = extractor.identity();
    report.fid = frechet_distance(fit_gaussian(gen_feats), fit_gaussian(ref_feats));

    std::vector<std::vector<double>> probs;
    for (const auto& f : gen_feats) probs.push_back(classifier.probs(f));
    report.is = inception_score(probs, std::min(is_splits, probs.size()));

    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "evaluation over %zu generated vs %zu reference images\n"
                  "  feature extractor: %s (desk-scale; scores are not comparable\n"
                  "  across extractors or to any published numbers)\n"
                  "  fid: %.6f\n"
                  "  inception score: %.6f (std %.6f, %zu splits)\n",
                  report.n_generated, report.n_reference, report.extractor_id.c_str(),
                  report.fid, report.is.mean, report.is.stddev,
                  std::min(is_splits, probs.size()));
    report.text = buf;
    std::snprintf(buf, sizeof(buf),
                  "fid=%.9g is_mean=%.9g is_std=%.9g n_generated=%zu n_reference=%zu "
                  "extractor=%s",
                  report.fid, report.is.mean, report.is.stddev, report.n_generated,
                  report.n_reference, report.extractor_id.c_str());
    report.machine_line = buf;
    return report;
}

}  // namespace tsit
