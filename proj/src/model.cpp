#include "gift/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace gift {

namespace {

constexpr float kInitStd = 0.08f;
constexpr float kBiasStd = 0.02f;
constexpr double kLnEps = 1e-5;
constexpr double kPi = 3.14159265358979323846;

// Box-Muller over mt19937_64; self-contained so builds are bit-identical
// across standard libraries.
class SeededGaussian {
  public:
    explicit SeededGaussian(std::uint64_t seed) : rng_(seed) {}

    float next(float stddev) {
        if (has_spare_) {
            has_spare_ = false;
            return static_cast<float>(spare_ * stddev);
        }
        const double u1 = to_unit(rng_());
        const double u2 = to_unit(rng_());
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        const double a = 2.0 * kPi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return static_cast<float>(r * std::cos(a) * static_cast<double>(stddev));
    }

    void fill(std::vector<float>& v, std::size_t n, float stddev) {
        v.resize(n);
        for (auto& x : v) x = next(stddev);
    }

  private:
    static double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

    std::mt19937_64 rng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// out[o] = b[o] + sum_i w[o*in_dim + i] * x[i], accumulated in double.
void linear(const float* x, const float* w, const float* b, float* out, int in_dim, int out_dim) {
    for (int o = 0; o < out_dim; ++o) {
        double acc = b ? static_cast<double>(b[o]) : 0.0;
        const float* row = w + static_cast<std::size_t>(o) * static_cast<std::size_t>(in_dim);
        for (int i = 0; i < in_dim; ++i) acc += static_cast<double>(row[i]) * static_cast<double>(x[i]);
        out[o] = static_cast<float>(acc);
    }
}

void layer_norm(const float* x, const float* g, const float* b, float* out, int dim) {
    double mean = 0.0;
    for (int i = 0; i < dim; ++i) mean += x[i];
    mean /= dim;
    double var = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double d = static_cast<double>(x[i]) - mean;
        var += d * d;
    }
    var /= dim;
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    for (int i = 0; i < dim; ++i)
        out[i] = static_cast<float>(((static_cast<double>(x[i]) - mean) * inv) * g[i] + b[i]);
}

float gelu(float x) {
    return static_cast<float>(0.5 * static_cast<double>(x) *
                              (1.0 + std::erf(static_cast<double>(x) / std::sqrt(2.0))));
}

// Softmax over scores[0..count); writes float weights.
void softmax_row(const float* scores, float* out, int count) {
    double zmax = scores[0];
    for (int j = 1; j < count; ++j)
        if (scores[j] > zmax) zmax = scores[j];
    double sum = 0.0;
    for (int j = 0; j < count; ++j) {
        const double e = std::exp(static_cast<double>(scores[j]) - zmax);
        out[j] = static_cast<float>(e);
        sum += e;
    }
    for (int j = 0; j < count; ++j) out[j] = static_cast<float>(out[j] / sum);
}

const std::vector<std::string> kShapeNames = {"blank",  "circle", "square", "triangle",
                                              "star",   "cross",  "ring",   "wedge"};
const std::vector<std::string> kColorNames = {"gray",   "red",    "green", "blue",
                                              "yellow", "purple", "orange", "teal"};

int name_id(const std::vector<std::string>& names, std::string_view name, const char* kind) {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    throw std::runtime_error(std::string("unknown ") + kind + ": " + std::string(name));
}

}  // namespace

const std::vector<std::string>& shape_names() { return kShapeNames; }
const std::vector<std::string>& color_names() { return kColorNames; }
int shape_id(std::string_view name) { return name_id(kShapeNames, name, "shape"); }
int color_id(std::string_view name) { return name_id(kColorNames, name, "color"); }

void ModelConfig::validate() const {
    if (layers <= 0 || heads <= 0 || head_dim <= 0 || dim <= 0)
        throw std::invalid_argument("ModelConfig: dimensions must be positive");
    if (dim != heads * head_dim)
        throw std::invalid_argument("ModelConfig: dim must equal heads * head_dim");
    if (vocab_size < 2) throw std::invalid_argument("ModelConfig: vocab too small");
    if (max_seq <= 0) throw std::invalid_argument("ModelConfig: max_seq must be positive");
    if (grid_rows <= 0 || grid_cols <= 0)
        throw std::invalid_argument("ModelConfig: grid dims must be positive");
}

void SegmentLayout::validate(int grid_cells) const {
    if (system.start != 0 || system.len < 0)
        throw std::invalid_argument("SegmentLayout: system span must start at 0");
    if (visual.start != system.end() || visual.len != grid_cells)
        throw std::invalid_argument("SegmentLayout: visual span must follow system and match grid");
    if (query.start != visual.end() || query.len <= 0)
        throw std::invalid_argument("SegmentLayout: query span must follow visual and be non-empty");
    if (generated.start != query.end() || generated.len < 0)
        throw std::invalid_argument("SegmentLayout: generated span must follow query");
}

Scene Scene::from_json_text(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Scene s;
    s.rows = j.at("grid").at("rows").get<int>();
    s.cols = j.at("grid").at("cols").get<int>();
    if (s.rows <= 0 || s.cols <= 0) throw std::runtime_error("scene: bad grid dims");
    const auto& cells = j.at("cells");
    if (static_cast<int>(cells.size()) != s.rows * s.cols)
        throw std::runtime_error("scene: cell count does not match grid");
    s.cells.reserve(cells.size());
    for (const auto& c : cells) {
        Cell cell;
        cell.shape = shape_id(c.at("shape").get<std::string>());
        cell.color = color_id(c.at("color").get<std::string>());
        s.cells.push_back(cell);
    }
    return s;
}

std::string Scene::to_json_text() const {
    nlohmann::json j;
    j["grid"] = {{"rows", rows}, {"cols", cols}};
    auto cells = nlohmann::json::array();
    for (const auto& c : this->cells) {
        cells.push_back({{"shape", kShapeNames[static_cast<std::size_t>(c.shape)]},
                         {"color", kColorNames[static_cast<std::size_t>(c.color)]}});
    }
    j["cells"] = std::move(cells);
    return j.dump(2);
}

Scene Scene::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("Scene::load: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

void Scene::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("Scene::save: cannot open " + path.string());
    out << to_json_text() << "\n";
}

Model build_model(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    SeededGaussian g(cfg.seed);

    const auto d = static_cast<std::size_t>(cfg.dim);
    g.fill(m.tok_emb, static_cast<std::size_t>(cfg.vocab_size) * d, kInitStd);
    g.fill(m.pos_emb, static_cast<std::size_t>(cfg.max_seq) * d, kInitStd);
    g.fill(m.shape_emb, kShapeNames.size() * d, kInitStd);
    g.fill(m.color_emb, kColorNames.size() * d, kInitStd);

    m.layers.resize(static_cast<std::size_t>(cfg.layers));
    for (auto& lw : m.layers) {
        lw.ln1_g.assign(d, 1.0f);
        lw.ln1_b.assign(d, 0.0f);
        g.fill(lw.wq, d * d, kInitStd);
        g.fill(lw.wk, d * d, kInitStd);
        g.fill(lw.wv, d * d, kInitStd);
        g.fill(lw.wo, d * d, kInitStd);
        g.fill(lw.bq, d, kBiasStd);
        g.fill(lw.bk, d, kBiasStd);
        g.fill(lw.bv, d, kBiasStd);
        g.fill(lw.bo, d, kBiasStd);
        lw.ln2_g.assign(d, 1.0f);
        lw.ln2_b.assign(d, 0.0f);
        g.fill(lw.w_up, 4 * d * d, kInitStd);
        g.fill(lw.b_up, 4 * d, kBiasStd);
        g.fill(lw.w_down, 4 * d * d, kInitStd);
        g.fill(lw.b_down, d, kBiasStd);
    }
    m.lnf_g.assign(d, 1.0f);
    m.lnf_b.assign(d, 0.0f);
    g.fill(m.lm_head, static_cast<std::size_t>(cfg.vocab_size) * d, kInitStd);
    return m;
}

SegmentLayout make_layout(const ModelConfig& cfg, const PromptInputs& in, int generated) {
    if (in.scene.rows != cfg.grid_rows || in.scene.cols != cfg.grid_cols)
        throw std::invalid_argument("make_layout: scene grid does not match model grid");
    SegmentLayout lay;
    lay.system = {0, static_cast<int>(in.system.size())};
    lay.visual = {lay.system.end(), cfg.grid_cells()};
    lay.query = {lay.visual.end(), static_cast<int>(in.query.size())};
    lay.generated = {lay.query.end(), generated};
    lay.validate(cfg.grid_cells());
    return lay;
}

std::vector<float> embed_prompt(const Model& m, const PromptInputs& in) {
    const int d = m.cfg.dim;
    const SegmentLayout lay = make_layout(m.cfg, in);
    const int n = lay.prompt_length();
    if (n > m.cfg.max_seq) throw std::runtime_error("embed_prompt: context overflow");

    std::vector<float> x(static_cast<std::size_t>(n) * static_cast<std::size_t>(d), 0.0f);
    auto row = [&](int p) { return x.data() + static_cast<std::size_t>(p) * static_cast<std::size_t>(d); };
    auto add_pos = [&](int p) {
        const float* pe = m.pos_emb.data() + static_cast<std::size_t>(p) * static_cast<std::size_t>(d);
        float* r = row(p);
        for (int i = 0; i < d; ++i) r[i] += pe[i];
    };

    for (int s = 0; s < lay.system.len; ++s) {
        const int id = in.system.ids[static_cast<std::size_t>(s)];
        const float* te = m.tok_emb.data() + static_cast<std::size_t>(id) * static_cast<std::size_t>(d);
        std::memcpy(row(lay.system.start + s), te, sizeof(float) * static_cast<std::size_t>(d));
        add_pos(lay.system.start + s);
    }
    for (int c = 0; c < lay.visual.len; ++c) {
        const auto& cell = in.scene.cells[static_cast<std::size_t>(c)];
        const float* se = m.shape_emb.data() + static_cast<std::size_t>(cell.shape) * static_cast<std::size_t>(d);
        const float* ce = m.color_emb.data() + static_cast<std::size_t>(cell.color) * static_cast<std::size_t>(d);
        float* r = row(lay.visual.start + c);
        for (int i = 0; i < d; ++i) r[i] = se[i] + ce[i];
        add_pos(lay.visual.start + c);
    }
    for (int q = 0; q < lay.query.len; ++q) {
        const int id = in.query.ids[static_cast<std::size_t>(q)];
        const float* te = m.tok_emb.data() + static_cast<std::size_t>(id) * static_cast<std::size_t>(d);
        std::memcpy(row(lay.query.start + q), te, sizeof(float) * static_cast<std::size_t>(d));
        add_pos(lay.query.start + q);
    }
    return x;
}

// ---------------------------------------------------------------------
// Eager prefill with full attention capture.
// ---------------------------------------------------------------------

PrefillResult prefill(const Model& m, const PromptInputs& in, std::optional<int> up_to_layer) {
    const ModelConfig& cfg = m.cfg;
    if (up_to_layer && (*up_to_layer < 0 || *up_to_layer >= cfg.layers))
        throw std::invalid_argument("prefill: up_to_layer out of range");
    const int run_layers = up_to_layer ? *up_to_layer + 1 : cfg.layers;

    const int d = cfg.dim;
    const int dk = cfg.head_dim;
    const int H = cfg.heads;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

    PrefillResult res;
    res.attn.layout = make_layout(cfg, in);
    const int n = res.attn.layout.prompt_length();
    res.attn.layers = run_layers;
    res.attn.heads = H;
    res.attn.tokens = n;
    res.attn.allocate();

    std::vector<float> x = embed_prompt(m, in);
    const auto nd = static_cast<std::size_t>(n) * static_cast<std::size_t>(d);
    std::vector<float> normed(nd), q(nd), k(nd), v(nd), ctx(static_cast<std::size_t>(d)),
        attn_out(static_cast<std::size_t>(d)), scores(static_cast<std::size_t>(n)),
        weights(static_cast<std::size_t>(n)), up(static_cast<std::size_t>(4 * d)),
        down(static_cast<std::size_t>(d));

    auto row = [&](std::vector<float>& buf, int p) {
        return buf.data() + static_cast<std::size_t>(p) * static_cast<std::size_t>(d);
    };

    for (int l = 0; l < run_layers; ++l) {
        const LayerWeights& lw = m.layers[static_cast<std::size_t>(l)];
        for (int p = 0; p < n; ++p) {
            layer_norm(row(x, p), lw.ln1_g.data(), lw.ln1_b.data(), row(normed, p), d);
            linear(row(normed, p), lw.wq.data(), lw.bq.data(), row(q, p), d, d);
            linear(row(normed, p), lw.wk.data(), lw.bk.data(), row(k, p), d, d);
            linear(row(normed, p), lw.wv.data(), lw.bv.data(), row(v, p), d, d);
        }
        for (int p = 0; p < n; ++p) {
            for (int h = 0; h < H; ++h) {
                const int off = h * dk;
                const float* qh = row(q, p) + off;
                for (int j = 0; j <= p; ++j) {
                    const float* kh = row(k, j) + off;
                    double acc = 0.0;
                    for (int t = 0; t < dk; ++t)
                        acc += static_cast<double>(qh[t]) * static_cast<double>(kh[t]);
                    scores[static_cast<std::size_t>(j)] = static_cast<float>(acc * inv_sqrt_dk);
                }
                softmax_row(scores.data(), weights.data(), p + 1);
                for (int j = 0; j <= p; ++j)
                    res.attn.at(l, h, p, j) = weights[static_cast<std::size_t>(j)];
                for (int t = 0; t < dk; ++t) {
                    double acc = 0.0;
                    for (int j = 0; j <= p; ++j)
                        acc += static_cast<double>(weights[static_cast<std::size_t>(j)]) *
                               static_cast<double>(row(v, j)[off + t]);
                    ctx[static_cast<std::size_t>(off + t)] = static_cast<float>(acc);
                }
            }
            linear(ctx.data(), lw.wo.data(), lw.bo.data(), attn_out.data(), d, d);
            float* xp = row(x, p);
            for (int i = 0; i < d; ++i) xp[i] += attn_out[static_cast<std::size_t>(i)];
            // ctx is per-position scratch; finish this position before moving on
            layer_norm(xp, lw.ln2_g.data(), lw.ln2_b.data(), row(normed, p), d);
            linear(row(normed, p), lw.w_up.data(), lw.b_up.data(), up.data(), d, 4 * d);
            for (auto& u : up) u = gelu(u);
            linear(up.data(), lw.w_down.data(), lw.b_down.data(), down.data(), 4 * d, d);
            for (int i = 0; i < d; ++i) xp[i] += down[static_cast<std::size_t>(i)];
        }
        ++res.layers_run;
    }

    res.hidden = std::move(x);
    return res;
}

// ---------------------------------------------------------------------
// Incremental decode session.
// ---------------------------------------------------------------------

DecodeSession::DecodeSession(const Model& m, const PromptInputs& in) : model_(m) {
    layout_ = make_layout(m.cfg, in);
    const int n = layout_.prompt_length();
    if (n > m.cfg.max_seq) throw std::runtime_error("DecodeSession: context overflow");

    key_cache_.assign(static_cast<std::size_t>(m.cfg.layers), {});
    value_cache_.assign(static_cast<std::size_t>(m.cfg.layers), {});
    for (auto& kc : key_cache_) kc.reserve(static_cast<std::size_t>(m.cfg.max_seq * m.cfg.dim));
    for (auto& vc : value_cache_) vc.reserve(static_cast<std::size_t>(m.cfg.max_seq * m.cfg.dim));

    std::vector<float> emb = embed_prompt(m, in);
    const auto d = static_cast<std::size_t>(m.cfg.dim);
    std::vector<float> one(d);
    for (int p = 0; p + 1 < n; ++p) {
        std::memcpy(one.data(), emb.data() + static_cast<std::size_t>(p) * d, sizeof(float) * d);
        process_position(one, false, nullptr, nullptr, nullptr);
    }
    pending_embedding_.assign(emb.begin() + static_cast<std::ptrdiff_t>((n - 1) * m.cfg.dim),
                              emb.begin() + static_cast<std::ptrdiff_t>(n * m.cfg.dim));
}

std::vector<float> DecodeSession::step(const SteeringHook* hook, StepRowListener* listener) {
    if (pending_embedding_.empty()) throw std::runtime_error("DecodeSession::step: no pending token");
    std::vector<float> logits;
    process_position(pending_embedding_, true, hook, listener, &logits);
    pending_embedding_.clear();
    return logits;
}

void DecodeSession::append_generated(int token_id) {
    if (token_id < 0 || token_id >= model_.cfg.vocab_size)
        throw std::invalid_argument("append_generated: bad token id");
    if (!pending_embedding_.empty())
        throw std::runtime_error("append_generated: previous token not yet processed");
    const int p = layout_.total();
    if (p >= model_.cfg.max_seq) throw std::runtime_error("DecodeSession: context overflow");
    layout_.generated.len += 1;

    const auto d = static_cast<std::size_t>(model_.cfg.dim);
    pending_embedding_.resize(d);
    const float* te = model_.tok_emb.data() + static_cast<std::size_t>(token_id) * d;
    const float* pe = model_.pos_emb.data() + static_cast<std::size_t>(p) * d;
    for (std::size_t i = 0; i < d; ++i) pending_embedding_[i] = te[i] + pe[i];
}

void DecodeSession::process_position(const std::vector<float>& embedding, bool want_logits,
                                     const SteeringHook* hook, StepRowListener* listener,
                                     std::vector<float>* logits_out) {
    const ModelConfig& cfg = model_.cfg;
    const int d = cfg.dim;
    const int dk = cfg.head_dim;
    const int H = cfg.heads;
    const int p = processed_;
    const int count = p + 1;  // keys visible to this row
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

    std::vector<float> x = embedding;
    std::vector<float> normed(static_cast<std::size_t>(d)), qv(static_cast<std::size_t>(d)),
        kv(static_cast<std::size_t>(d)), vv(static_cast<std::size_t>(d)),
        ctx(static_cast<std::size_t>(d)), attn_out(static_cast<std::size_t>(d)),
        scores(static_cast<std::size_t>(count)), up(static_cast<std::size_t>(4 * d)),
        down(static_cast<std::size_t>(d));
    HeadRows rows(static_cast<std::size_t>(H));
    HeadRows rows_pre;

    for (int l = 0; l < cfg.layers; ++l) {
        const LayerWeights& lw = model_.layers[static_cast<std::size_t>(l)];
        auto& kc = key_cache_[static_cast<std::size_t>(l)];
        auto& vc = value_cache_[static_cast<std::size_t>(l)];

        layer_norm(x.data(), lw.ln1_g.data(), lw.ln1_b.data(), normed.data(), d);
        linear(normed.data(), lw.wq.data(), lw.bq.data(), qv.data(), d, d);
        linear(normed.data(), lw.wk.data(), lw.bk.data(), kv.data(), d, d);
        linear(normed.data(), lw.wv.data(), lw.bv.data(), vv.data(), d, d);
        kc.insert(kc.end(), kv.begin(), kv.end());
        vc.insert(vc.end(), vv.begin(), vv.end());

        for (int h = 0; h < H; ++h) {
            const int off = h * dk;
            const float* qh = qv.data() + off;
            for (int j = 0; j < count; ++j) {
                const float* kh = kc.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(d) + off;
                double acc = 0.0;
                for (int t = 0; t < dk; ++t)
                    acc += static_cast<double>(qh[t]) * static_cast<double>(kh[t]);
                scores[static_cast<std::size_t>(j)] = static_cast<float>(acc * inv_sqrt_dk);
            }
            auto& r = rows[static_cast<std::size_t>(h)];
            r.resize(static_cast<std::size_t>(count));
            softmax_row(scores.data(), r.data(), count);
        }

        const bool steer = hook != nullptr && hook->active_at(l);
        if (listener != nullptr && steer) rows_pre = rows;
        if (steer) {
            hook->edit(l, rows, layout_);
            if (static_cast<int>(rows.size()) != H)
                throw std::runtime_error("steering hook: wrong head count");
            for (const auto& r : rows) {
                if (static_cast<int>(r.size()) != count)
                    throw std::runtime_error("steering hook: wrong row length");
                for (float w : r) {
                    if (std::isnan(w)) throw std::runtime_error("steering hook: NaN weight");
                    if (w < 0.0f) throw std::runtime_error("steering hook: negative weight");
                }
            }
        }
        if (listener != nullptr) listener->on_row(l, p, steer ? rows_pre : rows, rows);

        for (int h = 0; h < H; ++h) {
            const int off = h * dk;
            const auto& r = rows[static_cast<std::size_t>(h)];
            for (int t = 0; t < dk; ++t) {
                double acc = 0.0;
                for (int j = 0; j < count; ++j)
                    acc += static_cast<double>(r[static_cast<std::size_t>(j)]) *
                           static_cast<double>(
                               vc[static_cast<std::size_t>(j) * static_cast<std::size_t>(d) + off + t]);
                ctx[static_cast<std::size_t>(off + t)] = static_cast<float>(acc);
            }
        }
        linear(ctx.data(), lw.wo.data(), lw.bo.data(), attn_out.data(), d, d);
        for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] += attn_out[static_cast<std::size_t>(i)];

        layer_norm(x.data(), lw.ln2_g.data(), lw.ln2_b.data(), normed.data(), d);
        linear(normed.data(), lw.w_up.data(), lw.b_up.data(), up.data(), d, 4 * d);
        for (auto& u : up) u = gelu(u);
        linear(up.data(), lw.w_down.data(), lw.b_down.data(), down.data(), 4 * d, d);
        for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] += down[static_cast<std::size_t>(i)];

        ++layers_run_;
    }

    processed_ = p + 1;

    if (want_logits) {
        layer_norm(x.data(), model_.lnf_g.data(), model_.lnf_b.data(), normed.data(), d);
        logits_out->resize(static_cast<std::size_t>(cfg.vocab_size));
        linear(normed.data(), model_.lm_head.data(), nullptr, logits_out->data(), d, cfg.vocab_size);
    }
}

}  // namespace gift
