#include "prilora/model.hpp"

#include <cmath>

#include "prilora/errors.hpp"

namespace prilora {

std::string to_string(MatrixKind kind) {
    switch (kind) {
        case MatrixKind::q: return "q";
        case MatrixKind::k: return "k";
        case MatrixKind::v: return "v";
        case MatrixKind::o: return "o";
        case MatrixKind::ffn1: return "ffn1";
        case MatrixKind::ffn2: return "ffn2";
    }
    return "q";
}

MatrixKind matrix_kind_from_string(const std::string& name) {
    for (auto k : kAllMatrixKinds) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown matrix kind '" + name + "' (expected q, k, v, o, ffn1, ffn2)");
}

void ModelDims::validate() const {
    if (layers < 1) throw ConfigError("model needs at least one layer");
    if (d_model < 1 || d_ff < 1 || heads < 1) throw ConfigError("model widths must be positive");
    if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
    if (vocab < 1 || seq_len < 1 || outputs < 1) throw ConfigError("vocab, seq_len and outputs must be positive");
}

MatrixShape ModelDims::shape_of(MatrixKind kind) const {
    const auto d = static_cast<std::size_t>(d_model);
    const auto m = static_cast<std::size_t>(d_ff);
    switch (kind) {
        case MatrixKind::ffn1: return {m, d};
        case MatrixKind::ffn2: return {d, m};
        default: return {d, d};
    }
}

std::vector<MatrixShape> ModelDims::block_shapes(const std::set<MatrixKind>& adapted) const {
    std::vector<MatrixShape> out;
    for (auto k : kAllMatrixKinds)
        if (adapted.count(k)) out.push_back(shape_of(k));
    return out;
}

std::vector<Tensor*> ToyModel::trainable() {
    std::vector<Tensor*> out;
    for (auto& a : adapters) {
        out.push_back(&a.A);
        out.push_back(&a.B);
    }
    out.push_back(&head_weight);
    out.push_back(&head_bias);
    return out;
}

std::vector<const Tensor*> ToyModel::trainable() const {
    std::vector<const Tensor*> out;
    for (const auto& a : adapters) {
        out.push_back(&a.A);
        out.push_back(&a.B);
    }
    out.push_back(&head_weight);
    out.push_back(&head_bias);
    return out;
}

long ToyModel::adapter_param_count() const {
    long n = 0;
    for (const auto& a : adapters) n += static_cast<long>(a.param_count());
    return n;
}

namespace {

constexpr std::uint64_t kBaseStream = 0xBA5E;
constexpr std::uint64_t kAdapterStream = 0xADA7;

}  // namespace

ToyModel build_model(const ModelInit& init) {
    init.dims.validate();
    init.prune.validate();
    init.plan.validate();
    if (init.plan.layers() != static_cast<std::size_t>(init.dims.layers)) {
        throw ConfigError("rank plan has " + std::to_string(init.plan.layers()) + " layers but the model has " +
                          std::to_string(init.dims.layers));
    }
    if (!(init.adapter.init_std > 0.0)) throw ConfigError("adapter init std must be > 0");

    ToyModel m;
    m.dims = init.dims;
    m.plan = init.plan;
    const auto d = static_cast<std::size_t>(init.dims.d_model);

    // The frozen base depends only on base_seed and dims, never on the plan
    // or run seed, so every variant and repeat fine-tunes the same network.
    Rng base(init.base_seed, kBaseStream);
    m.token_embedding = gaussian(base, {static_cast<std::size_t>(init.dims.vocab), d}, 0.0, 1.0);
    m.position_embedding = gaussian(base, {static_cast<std::size_t>(init.dims.seq_len), d}, 0.0, 0.5);
    m.blocks.resize(static_cast<std::size_t>(init.dims.layers));
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
        for (auto kind : kAllMatrixKinds) {
            const auto s = init.dims.shape_of(kind);
            auto& lin = m.blocks[l][static_cast<std::size_t>(kind)];
            lin.ref = "block" + std::to_string(l) + "." + to_string(kind);
            lin.weight = gaussian(base, {s.d1, s.d2}, 0.0, 1.0 / std::sqrt(static_cast<double>(s.d2)));
            lin.bias = gaussian(base, {s.d1}, 0.0, 0.02);
        }
    }

    const Rng adapter_root(init.seed, kAdapterStream);
    m.adapter_index.assign(m.blocks.size(), {-1, -1, -1, -1, -1, -1});
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
        const int r = init.plan.ranks[l];
        if (r == 0) continue;
        for (auto kind : kAllMatrixKinds) {
            if (!init.adapter.adapted.count(kind)) continue;
            const auto& lin = m.blocks[l][static_cast<std::size_t>(kind)];
            const auto s = lin.shape();
            Rng rng = adapter_root.fork(l * kMatricesPerBlock + static_cast<std::size_t>(kind));
            const double scale = init.adapter.alpha ? *init.adapter.alpha / r : 1.0;
            m.adapter_index[l][static_cast<std::size_t>(kind)] = static_cast<int>(m.adapters.size());
            m.adapters.push_back(init_adapter(s.d1, s.d2, r, rng, init.adapter.init_std, scale, lin.ref));
            m.slots.push_back({l, kind});
            m.input_ema.emplace_back(s.d2, init.prune.ema_decay, init.prune.ema_copy_first);
            m.latent_ema.emplace_back(static_cast<std::size_t>(r), init.prune.ema_decay, init.prune.ema_copy_first);
        }
    }

    // Zero head: the untrained model predicts uniformly.
    m.head_weight = Tensor::zeros({static_cast<std::size_t>(init.dims.outputs), d});
    m.head_bias = Tensor::zeros({static_cast<std::size_t>(init.dims.outputs)});
    return m;
}

Batch make_batch(const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
    Batch b;
    b.size = indices.size();
    for (auto i : indices) {
        const auto& s = samples.at(i);
        b.tokens.insert(b.tokens.end(), s.tokens.begin(), s.tokens.end());
        b.labels.push_back(s.label);
        b.targets.push_back(s.target);
    }
    return b;
}

Batch make_batch(const std::vector<Sample>& samples) {
    std::vector<std::size_t> all(samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return make_batch(samples, all);
}

ForwardPass forward_pass(ad::Graph& g, const ToyModel& model, const Batch& batch, bool classification) {
    const auto seq = static_cast<std::size_t>(model.dims.seq_len);
    const auto d = static_cast<std::size_t>(model.dims.d_model);
    if (batch.tokens.size() != batch.size * seq) throw DimensionError("batch token count is not size * seq_len");

    ForwardPass fp;
    fp.params.resize(model.adapters.size() * 2 + 2);
    fp.adapter_input.resize(model.adapters.size());
    fp.adapter_latent.resize(model.adapters.size());

    Tensor x0({batch.size * seq, d});
    for (std::size_t b = 0; b < batch.size; ++b) {
        for (std::size_t i = 0; i < seq; ++i) {
            const int tok = batch.tokens[b * seq + i];
            if (tok < 0 || tok >= model.dims.vocab) throw ParameterError("token id out of vocabulary");
            auto row = x0.row(b * seq + i);
            auto e = model.token_embedding.row(static_cast<std::size_t>(tok));
            auto p = model.position_embedding.row(i);
            for (std::size_t j = 0; j < d; ++j) row[j] = e[j] + p[j];
        }
    }
    ad::Var x = g.constant(std::move(x0));

    auto linear = [&](std::size_t layer, MatrixKind kind, ad::Var input) {
        const auto& lin = model.blocks[layer][static_cast<std::size_t>(kind)];
        AdaptedLinearVars vars{g.constant(lin.weight), std::nullopt, std::nullopt, std::nullopt, 1.0};
        fp.frozen.push_back(vars.weight);
        if (lin.bias) {
            vars.bias = g.constant(*lin.bias);
            fp.frozen.push_back(*vars.bias);
        }
        const int idx = model.adapter_index[layer][static_cast<std::size_t>(kind)];
        if (idx < 0) return forward(g, vars, input);
        const auto& adapter = model.adapters[static_cast<std::size_t>(idx)];
        vars.A = g.parameter(adapter.A);
        vars.B = g.parameter(adapter.B);
        vars.scale = adapter.scale;
        fp.params[2 * static_cast<std::size_t>(idx)] = *vars.A;
        fp.params[2 * static_cast<std::size_t>(idx) + 1] = *vars.B;
        fp.adapter_input[static_cast<std::size_t>(idx)] = input;
        std::optional<ad::Var> latent;
        const ad::Var out = forward(g, vars, input, &latent);
        fp.adapter_latent[static_cast<std::size_t>(idx)] = *latent;
        return out;
    };

    const auto heads = static_cast<std::size_t>(model.dims.heads);
    for (std::size_t l = 0; l < model.blocks.size(); ++l) {
        const ad::Var q = linear(l, MatrixKind::q, x);
        const ad::Var k = linear(l, MatrixKind::k, x);
        const ad::Var v = linear(l, MatrixKind::v, x);
        const ad::Var att = ad::attention(g, q, k, v, batch.size, seq, heads);
        const ad::Var o = linear(l, MatrixKind::o, att);
        const ad::Var x1 = ad::layer_norm(g, ad::add(g, x, o));
        const ad::Var h = ad::relu(g, linear(l, MatrixKind::ffn1, x1));
        const ad::Var f = linear(l, MatrixKind::ffn2, h);
        x = ad::layer_norm(g, ad::add(g, x1, f));
    }

    const ad::Var pooled = ad::mean_pool(g, x, batch.size, seq);
    const ad::Var hw = g.parameter(model.head_weight);
    const ad::Var hb = g.parameter(model.head_bias);
    fp.params[fp.params.size() - 2] = hw;
    fp.params[fp.params.size() - 1] = hb;
    fp.output = ad::add_bias(g, ad::matmul_nt(g, pooled, hw), hb);
    fp.loss = classification ? ad::softmax_cross_entropy(g, fp.output, batch.labels)
                             : ad::mean_squared_error(g, fp.output, batch.targets);
    return fp;
}

}  // namespace prilora
