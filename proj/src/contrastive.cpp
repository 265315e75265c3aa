#include "contrastive.hpp"

#include "error.hpp"
#include "json_util.hpp"
#include "splitter.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>
#include <random>

namespace cytoclip::contrastive {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

void require_finite(const Matrix& m, const char* what) {
    for (double v : m.data)
        if (!std::isfinite(v)) fail(ErrorKind::Domain, std::string(what) + " contains a non-finite value");
}

// out = a^T b  (a: n x p, b: n x q -> p x q)
Matrix transpose_times(const Matrix& a, const Matrix& b) {
    Matrix out(a.cols, b.cols);
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double av = a(r, i);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += av * b(r, j);
        }
    return out;
}

Matrix times(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) fail(ErrorKind::Shape, "matrix product shape mismatch");
    Matrix out(a.rows, b.cols);
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double av = a(r, k);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) out(r, j) += av * b(k, j);
        }
    return out;
}

// Both directions' softmax terms of tau * sim. Returns the loss.
double softmax_terms(const Matrix& sim, double tau, Matrix* row_softmax, Matrix* col_softmax) {
    const std::size_t n = sim.rows;
    double row_sum = 0.0;
    double col_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mr = -std::numeric_limits<double>::infinity();
        double mc = mr;
        for (std::size_t j = 0; j < n; ++j) {
            mr = std::max(mr, tau * sim(i, j));
            mc = std::max(mc, tau * sim(j, i));
        }
        double zr = 0.0;
        double zc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            zr += std::exp(tau * sim(i, j) - mr);
            zc += std::exp(tau * sim(j, i) - mc);
        }
        const double lse_r = mr + std::log(zr);
        const double lse_c = mc + std::log(zc);
        row_sum += lse_r - tau * sim(i, i);
        col_sum += lse_c - tau * sim(i, i);
        if (row_softmax)
            for (std::size_t j = 0; j < n; ++j) (*row_softmax)(i, j) = std::exp(tau * sim(i, j) - lse_r);
        if (col_softmax)
            for (std::size_t j = 0; j < n; ++j) (*col_softmax)(j, i) = std::exp(tau * sim(j, i) - lse_c);
    }
    return (row_sum + col_sum) / (2.0 * static_cast<double>(n));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

struct Reader {
    const std::string& data;
    std::size_t pos = 0;
    std::uint64_t take(int bytes) {
        if (pos + static_cast<std::size_t>(bytes) > data.size()) fail(ErrorKind::Parse, "checkpoint truncated");
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
        return v;
    }
    double f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(take(4))); }
};

} // namespace

Matrix normalize_rows(const Matrix& m) {
    Matrix out = m;
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double norm = std::sqrt(dot(m.row(r), m.row(r)));
        if (!(norm > 0.0)) fail(ErrorKind::Domain, "zero-norm embedding row " + std::to_string(r));
        for (double& v : out.row(r)) v /= norm;
    }
    return out;
}

Matrix cosine_sim_matrix(const Matrix& image_embeddings, const Matrix& text_embeddings) {
    if (image_embeddings.cols != text_embeddings.cols) fail(ErrorKind::Shape, "embedding dimensions differ");
    const Matrix a = normalize_rows(image_embeddings);
    const Matrix b = normalize_rows(text_embeddings);
    Matrix s(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.rows; ++j) s(i, j) = std::clamp(dot(a.row(i), b.row(j)), -1.0, 1.0);
    return s;
}

double symmetric_ce_loss(const Matrix& sim, double tau) {
    if (sim.rows == 0 || sim.rows != sim.cols) fail(ErrorKind::Shape, "similarity matrix must be square and non-empty");
    if (!(tau > 0.0) || !std::isfinite(tau)) fail(ErrorKind::Domain, "temperature must be finite and > 0");
    require_finite(sim, "similarity matrix");
    return softmax_terms(sim, tau, nullptr, nullptr);
}

LossGradients loss_gradients(const Matrix& image_embeddings, const Matrix& text_embeddings, double logit_scale) {
    const std::size_t n = image_embeddings.rows;
    if (n == 0 || text_embeddings.rows != n || image_embeddings.cols != text_embeddings.cols)
        fail(ErrorKind::Shape, "loss_gradients: image/text batches must be N x d with equal shapes");
    require_finite(image_embeddings, "image embeddings");
    require_finite(text_embeddings, "text embeddings");

    const Matrix in = normalize_rows(image_embeddings);
    const Matrix tn = normalize_rows(text_embeddings);
    Matrix sim(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) sim(i, j) = dot(in.row(i), tn.row(j));

    // Above the clamp tau is constant, so logit_scale gets no gradient there.
    const bool clamped = logit_scale > kMaxLogitScale;
    const double tau = std::exp(std::min(logit_scale, kMaxLogitScale));
    Matrix p(n, n);
    Matrix q(n, n);
    LossGradients g;
    g.loss = softmax_terms(sim, tau, &p, &q);

    // dLoss/dlogits = (P + Q - 2I) / 2N ; logits = tau * sim
    const double inv2n = 1.0 / (2.0 * static_cast<double>(n));
    Matrix d_sim(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double d_logit = (p(i, j) + q(i, j) - (i == j ? 2.0 : 0.0)) * inv2n;
            g.d_logit_scale += d_logit * tau * sim(i, j);
            d_sim(i, j) = d_logit * tau;
        }

    if (clamped) g.d_logit_scale = 0.0;

    const Matrix d_in = times(d_sim, tn);
    const Matrix d_tn = transpose_times(d_sim, in);

    auto through_norm = [](const Matrix& raw, const Matrix& unit, const Matrix& d_unit) {
        Matrix out(raw.rows, raw.cols);
        for (std::size_t r = 0; r < raw.rows; ++r) {
            const double norm = std::sqrt(dot(raw.row(r), raw.row(r)));
            const double proj = dot(unit.row(r), d_unit.row(r));
            for (std::size_t c = 0; c < raw.cols; ++c) out(r, c) = (d_unit(r, c) - unit(r, c) * proj) / norm;
        }
        return out;
    };
    g.d_image = through_norm(image_embeddings, in, d_in);
    g.d_text = through_norm(text_embeddings, tn, d_tn);
    return g;
}

OptimizerState make_optimizer_state(const AdamWParams& hyper, std::span<const std::size_t> block_sizes,
                                    std::vector<bool> decay) {
    OptimizerState s;
    s.hyper = hyper;
    for (std::size_t n : block_sizes) {
        s.first_moment.emplace_back(n, 0.0);
        s.second_moment.emplace_back(n, 0.0);
    }
    if (decay.empty()) decay.assign(block_sizes.size(), true);
    if (decay.size() != block_sizes.size()) fail(ErrorKind::Shape, "decay mask size != number of parameter blocks");
    s.decay = std::move(decay);
    return s;
}

void optimizer_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                    OptimizerState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        fail(ErrorKind::Shape, "optimizer_step: parameter/gradient/state block count mismatch");
    for (std::size_t b = 0; b < params.size(); ++b)
        if (params[b].size() != grads[b].size() || params[b].size() != state.first_moment[b].size())
            fail(ErrorKind::Shape, "optimizer_step: block " + std::to_string(b) + " size mismatch");

    const AdamWParams& h = state.hyper;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(h.beta1, t);
    const double bc2 = 1.0 - std::pow(h.beta2, t);
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto& m = state.first_moment[b];
        auto& v = state.second_moment[b];
        const double wd = state.decay[b] ? h.weight_decay : 0.0;
        for (std::size_t i = 0; i < params[b].size(); ++i) {
            const double gi = grads[b][i];
            m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
            v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            params[b][i] -= h.lr * (m_hat / (std::sqrt(v_hat) + h.eps) + wd * params[b][i]);
        }
    }
}

std::vector<double> hashed_bow(const std::string& text, std::size_t dim) {
    if (dim == 0) fail(ErrorKind::InvalidArgument, "text dimension must be > 0");
    std::vector<double> v(dim, 0.0);
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : token) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        v[h % dim] += (h >> 63) ? -1.0 : 1.0;
        token.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c)) token.push_back(static_cast<char>(std::tolower(c)));
        else flush();
    }
    flush();
    const double norm = std::sqrt(dot(v, v));
    if (!(norm > 0.0)) fail(ErrorKind::Domain, "caption has no tokens: '" + text + "'");
    for (double& x : v) x /= norm;
    return v;
}

std::vector<double> DualEncoder::standardize(std::span<const double> features) const {
    if (features.size() + 1 != image_dim())
        fail(ErrorKind::Shape, "feature vector has " + std::to_string(features.size()) + " entries, model expects " +
                                   std::to_string(image_dim() - 1));
    std::vector<double> out(image_dim());
    for (std::size_t k = 0; k < features.size(); ++k) out[k] = (features[k] - feature_mean[k]) * feature_inv_std[k];
    out.back() = 1.0;  // bias input
    return out;
}

std::vector<double> DualEncoder::encode_image(std::span<const double> features) const {
    const auto x = standardize(features);
    Matrix row(1, x.size());
    std::copy(x.begin(), x.end(), row.data.begin());
    return normalize_rows(times(row, image_projection)).data;
}

std::vector<double> DualEncoder::encode_text(const std::string& text) const {
    const auto x = hashed_bow(text, text_dim());
    Matrix row(1, x.size());
    std::copy(x.begin(), x.end(), row.data.begin());
    return normalize_rows(times(row, text_projection)).data;
}

Matrix DualEncoder::encode_images(const std::vector<std::vector<double>>& features) const {
    Matrix out(features.size(), embed_dim());
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto e = encode_image(features[i]);
        std::copy(e.begin(), e.end(), out.row(i).begin());
    }
    return out;
}

Matrix DualEncoder::encode_texts(const std::vector<std::string>& texts) const {
    Matrix out(texts.size(), embed_dim());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto e = encode_text(texts[i]);
        std::copy(e.begin(), e.end(), out.row(i).begin());
    }
    return out;
}

TrainResult train_toy(const std::vector<std::vector<double>>& features, const std::vector<std::string>& captions,
                      const TrainConfig& config) {
    if (features.empty()) fail(ErrorKind::InvalidArgument, "train_toy: empty dataset");
    if (features.size() != captions.size()) fail(ErrorKind::Shape, "train_toy: features/captions count mismatch");
    if (config.batch_size == 0 || config.embed_dim == 0) fail(ErrorKind::InvalidArgument, "train_toy: zero batch/dim");
    const std::size_t n = features.size();
    const std::size_t d_feat = features.front().size();
    for (const auto& f : features)
        if (f.size() != d_feat) fail(ErrorKind::Shape, "train_toy: ragged feature vectors");

    TrainResult res;
    DualEncoder& model = res.model;
    model.feature_mean.assign(d_feat, 0.0);
    model.feature_inv_std.assign(d_feat, 1.0);
    for (const auto& f : features)
        for (std::size_t k = 0; k < d_feat; ++k) model.feature_mean[k] += f[k] / static_cast<double>(n);
    for (std::size_t k = 0; k < d_feat; ++k) {
        double var = 0.0;
        for (const auto& f : features) var += (f[k] - model.feature_mean[k]) * (f[k] - model.feature_mean[k]);
        const double sd = std::sqrt(var / static_cast<double>(n));
        model.feature_inv_std[k] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> init(0.0, config.init_std);
    model.image_projection = Matrix(d_feat + 1, config.embed_dim);
    model.text_projection = Matrix(config.text_dim, config.embed_dim);
    for (double& w : model.image_projection.data) w = init(rng);
    for (double& w : model.text_projection.data) w = init(rng);
    model.temperature.set(config.init_logit_scale);

    // Fixed inputs: standardised features and caption bag-of-words.
    Matrix x_all(n, d_feat + 1);
    Matrix t_all(n, config.text_dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = model.standardize(features[i]);
        std::copy(x.begin(), x.end(), x_all.row(i).begin());
        const auto t = hashed_bow(captions[i], config.text_dim);
        std::copy(t.begin(), t.end(), t_all.row(i).begin());
    }

    const std::size_t sizes[] = {model.image_projection.data.size(), model.text_projection.data.size(), 1};
    OptimizerState opt = make_optimizer_state(config.optimizer, sizes, {true, true, false});

    std::vector<std::size_t> order(n);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        split::seeded_shuffle(order, config.seed ^ (0xA24BAED4963EE407ULL * (epoch + 1)));
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t b = std::min(config.batch_size, n - start);
            Matrix xb(b, d_feat + 1);
            Matrix tb(b, config.text_dim);
            for (std::size_t r = 0; r < b; ++r) {
                std::copy_n(x_all.row(order[start + r]).begin(), xb.cols, xb.row(r).begin());
                std::copy_n(t_all.row(order[start + r]).begin(), tb.cols, tb.row(r).begin());
            }
            const Matrix ei = times(xb, model.image_projection);
            const Matrix et = times(tb, model.text_projection);
            const LossGradients g = loss_gradients(ei, et, model.temperature.logit_scale());
            loss_sum += g.loss;
            ++batches;

            const Matrix d_wi = transpose_times(xb, g.d_image);
            const Matrix d_wt = transpose_times(tb, g.d_text);
            double logit = model.temperature.logit_scale();
            const std::span<double> params[] = {model.image_projection.data, model.text_projection.data, {&logit, 1}};
            const std::span<const double> grads[] = {d_wi.data, d_wt.data, {&g.d_logit_scale, 1}};
            optimizer_step(params, grads, opt);
            model.temperature.set(logit);
        }
        res.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    }
    return res;
}

void save_checkpoint(const std::filesystem::path& path, const DualEncoder& model) {
    std::string out = "CYCK";
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(model.image_dim()));
    put_u32(out, static_cast<std::uint32_t>(model.text_dim()));
    put_u32(out, static_cast<std::uint32_t>(model.embed_dim()));
    put_u64(out, std::bit_cast<std::uint64_t>(model.temperature.logit_scale()));
    for (double v : model.image_projection.data) put_f32(out, v);
    for (double v : model.text_projection.data) put_f32(out, v);
    for (double v : model.feature_mean) put_f32(out, v);
    for (double v : model.feature_inv_std) put_f32(out, v);
    write_file_atomic(path, out);
}

DualEncoder load_checkpoint(const std::filesystem::path& path) {
    const std::string data = read_text_file(path);
    if (data.size() < 4 || data.compare(0, 4, "CYCK") != 0) fail(ErrorKind::Parse, "not a checkpoint: " + path.string());
    Reader r{data, 4};
    if (const auto version = r.take(4); version != 1)
        fail(ErrorKind::Parse, "unsupported checkpoint version " + std::to_string(version));
    const auto d_img = static_cast<std::size_t>(r.take(4));
    const auto d_txt = static_cast<std::size_t>(r.take(4));
    const auto d = static_cast<std::size_t>(r.take(4));
    if (d_img < 2 || d_txt == 0 || d == 0) fail(ErrorKind::Parse, "checkpoint has degenerate dimensions");
    DualEncoder m;
    m.temperature.set(std::bit_cast<double>(r.take(8)));
    m.image_projection = Matrix(d_img, d);
    m.text_projection = Matrix(d_txt, d);
    for (double& v : m.image_projection.data) v = r.f32();
    for (double& v : m.text_projection.data) v = r.f32();
    m.feature_mean.resize(d_img - 1);
    m.feature_inv_std.resize(d_img - 1);
    for (double& v : m.feature_mean) v = r.f32();
    for (double& v : m.feature_inv_std) v = r.f32();
    if (r.pos != data.size()) fail(ErrorKind::Parse, "checkpoint has trailing bytes");
    return m;
}

void save_embeddings(const std::filesystem::path& path, const Matrix& embeddings) {
    std::string out = "CYEM";
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(embeddings.rows));
    put_u32(out, static_cast<std::uint32_t>(embeddings.cols));
    for (double v : embeddings.data) put_f32(out, v);
    write_file_atomic(path, out);
}

Matrix load_embeddings(const std::filesystem::path& path) {
    const std::string data = read_text_file(path);
    if (data.size() < 4 || data.compare(0, 4, "CYEM") != 0) fail(ErrorKind::Parse, "not an embedding file: " + path.string());
    Reader r{data, 4};
    if (const auto version = r.take(4); version != 1)
        fail(ErrorKind::Parse, "unsupported embedding file version " + std::to_string(version));
    const auto rows = static_cast<std::size_t>(r.take(4));
    const auto cols = static_cast<std::size_t>(r.take(4));
    if (data.size() != 16 + 4 * rows * cols) fail(ErrorKind::Parse, "embedding file size does not match its header");
    Matrix m(rows, cols);
    for (double& v : m.data) v = r.f32();
    return m;
}

} // namespace cytoclip::contrastive
