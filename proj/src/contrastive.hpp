#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cytoclip::contrastive {

// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

inline const double kMaxLogitScale = std::log(100.0);

// tau = exp(logit_scale), with logit_scale kept <= ln(100).
class Temperature {
public:
    explicit Temperature(double logit_scale = std::log(1.0 / 0.07)) { set(logit_scale); }
    void set(double logit_scale) { logit_scale_ = std::min(logit_scale, kMaxLogitScale); }
    double logit_scale() const noexcept { return logit_scale_; }
    double tau() const { return std::exp(logit_scale_); }

private:
    double logit_scale_;
};

// Unit-normalises each row; throws Error(Domain) on a zero-norm row.
Matrix normalize_rows(const Matrix& m);

// S[i][j] = <I_i, T_j> / (|I_i| |T_j|).
Matrix cosine_sim_matrix(const Matrix& image_embeddings, const Matrix& text_embeddings);

// Mean of the image->text and text->image softmax cross-entropies of tau * S,
// with log-sum-exp max subtraction.
double symmetric_ce_loss(const Matrix& sim, double tau);

struct LossGradients {
    double loss = 0.0;
    Matrix d_image;  // w.r.t. the raw (pre-normalisation) image embeddings
    Matrix d_text;   // w.r.t. the raw text embeddings
    double d_logit_scale = 0.0;
};

LossGradients loss_gradients(const Matrix& image_embeddings, const Matrix& text_embeddings, double logit_scale);

struct AdamWParams {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct OptimizerState {
    AdamWParams hyper;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::vector<bool> decay;  // per parameter block
    std::uint64_t step = 0;
};

OptimizerState make_optimizer_state(const AdamWParams& hyper, std::span<const std::size_t> block_sizes,
                                    std::vector<bool> decay = {});

// theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta), one call per step
// over all parameter blocks. Throws Error(Shape) on any size mismatch.
void optimizer_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                    OptimizerState& state);

// Signed hashed bag-of-words of lower-cased alphanumeric tokens, L2-normalised.
std::vector<double> hashed_bow(const std::string& text, std::size_t dim);

struct DualEncoder {
    Matrix image_projection;  // d_img x d
    Matrix text_projection;   // d_txt x d
    std::vector<double> feature_mean;     // d_img
    std::vector<double> feature_inv_std;  // d_img
    Temperature temperature;

    std::size_t image_dim() const { return image_projection.rows; }
    std::size_t text_dim() const { return text_projection.rows; }
    std::size_t embed_dim() const { return image_projection.cols; }

    std::vector<double> standardize(std::span<const double> features) const;
    // Unit-norm embeddings.
    std::vector<double> encode_image(std::span<const double> features) const;
    std::vector<double> encode_text(const std::string& text) const;
    Matrix encode_images(const std::vector<std::vector<double>>& features) const;
    Matrix encode_texts(const std::vector<std::string>& texts) const;
};

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    AdamWParams optimizer;
    std::size_t embed_dim = 32;
    std::size_t text_dim = 256;
    double init_std = 1e-3;
    double init_logit_scale = std::log(1.0 / 0.07);
    std::uint64_t seed = 0;
};

struct TrainResult {
    DualEncoder model;
    std::vector<double> epoch_loss;  // mean batch loss per epoch
};

// Trains projections + logit scale on (features[i], captions[i]) pairs. Batches
// come from a seeded shuffle each epoch; the last partial batch is kept.
TrainResult train_toy(const std::vector<std::vector<double>>& features, const std::vector<std::string>& captions,
                      const TrainConfig& config);

// Little-endian: "CYCK", u32 version, u32 d_img, u32 d_txt, u32 d, f64 logit_scale,
// then f32 row-major image_projection, text_projection, feature_mean, feature_inv_std.
void save_checkpoint(const std::filesystem::path& path, const DualEncoder& model);
DualEncoder load_checkpoint(const std::filesystem::path& path);

// "CYEM", u32 version, u32 rows, u32 cols, then f32 row-major values.
void save_embeddings(const std::filesystem::path& path, const Matrix& embeddings);
Matrix load_embeddings(const std::filesystem::path& path);

} // namespace cytoclip::contrastive
