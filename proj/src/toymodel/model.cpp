#include "sta/errors.hpp"
#include "sta/toymodel.hpp"

#include <bit>
#include <random>

namespace sta {

void ToyModelConfig::validate() const {
    if (vocab_size < 4) {
        throw ParameterError("vocab_size must be >= 4 (PAD, BOS, EOS, SPACE are reserved)");
    }
    if (d_model == 0 || n_layers == 0 || n_heads == 0 || max_seq == 0) {
        throw ParameterError("d_model, n_layers, n_heads and max_seq must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ParameterError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                             std::to_string(n_heads) + ")");
    }
}

void Model::for_each_param(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("token_embedding", token_embedding);
    fn("position_embedding", position_embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& p = layers[l];
        const std::string prefix = "layers." + std::to_string(l) + ".";
        fn(prefix + "ln1_gain", p.ln1_gain);
        fn(prefix + "ln1_bias", p.ln1_bias);
        fn(prefix + "w_query", p.w_query);
        fn(prefix + "w_key", p.w_key);
        fn(prefix + "w_value", p.w_value);
        fn(prefix + "w_out", p.w_out);
        fn(prefix + "ln2_gain", p.ln2_gain);
        fn(prefix + "ln2_bias", p.ln2_bias);
        fn(prefix + "w_up", p.w_up);
        fn(prefix + "b_up", p.b_up);
        fn(prefix + "w_down", p.w_down);
        fn(prefix + "b_down", p.b_down);
    }
    fn("final_gain", final_gain);
    fn("final_bias", final_bias);
}

void Model::for_each_param(const std::function<void(const std::string&, const Tensor&)>& fn) const {
    const_cast<Model*>(this)->for_each_param(
        [&](const std::string& name, Tensor& t) { fn(name, static_cast<const Tensor&>(t)); });
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for_each_param([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
}

namespace {

Model shaped(const ToyModelConfig& c) {
    const std::size_t d = c.d_model;
    const std::size_t f = c.d_ff();
    Model m;
    m.config = c;
    m.token_embedding = Tensor({c.vocab_size, d});
    m.position_embedding = Tensor({c.max_seq, d});
    m.layers.resize(c.n_layers);
    for (auto& p : m.layers) {
        p.ln1_gain = Tensor({d}, 1.0);
        p.ln1_bias = Tensor({d});
        p.w_query = Tensor({d, d});
        p.w_key = Tensor({d, d});
        p.w_value = Tensor({d, d});
        p.w_out = Tensor({d, d});
        p.ln2_gain = Tensor({d}, 1.0);
        p.ln2_bias = Tensor({d});
        p.w_up = Tensor({d, f});
        p.b_up = Tensor({f});
        p.w_down = Tensor({f, d});
        p.b_down = Tensor({d});
    }
    m.final_gain = Tensor({d}, 1.0);
    m.final_bias = Tensor({d});
    return m;
}

bool is_gaussian_init(const std::string& name) {
    // Matrices get Gaussian noise; layer-norm gains stay 1 and biases stay 0.
    return name.find("gain") == std::string::npos && name.find("bias") == std::string::npos &&
           name.find("b_up") == std::string::npos && name.find("b_down") == std::string::npos;
}

}  // namespace

Model init_model(const ToyModelConfig& config) {
    config.validate();
    Model m = shaped(config);
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    m.for_each_param([&](const std::string& name, Tensor& t) {
        if (is_gaussian_init(name)) {
            for (double& v : t.data()) {
                v = normal(rng);
            }
        }
    });
    return m;
}

Model zeros_like(const Model& model) {
    Model z = model;
    z.for_each_param([](const std::string&, Tensor& t) { t.fill(0.0); });
    return z;
}

std::uint64_t weight_checksum(const Model& model) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    model.for_each_param([&](const std::string&, const Tensor& t) {
        for (double v : t.data()) {
            auto bits = std::bit_cast<std::uint64_t>(v);
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xffU;
                h *= 0x100000001b3ULL;
            }
        }
    });
    return h;
}

void validate_tokens(const Model& model, const TokenSeq& tokens) {
    if (tokens.empty()) {
        throw InputError("token sequence is empty");
    }
    if (tokens.size() > model.config.max_seq) {
        throw InputError("sequence length " + std::to_string(tokens.size()) + " exceeds max_seq " +
                         std::to_string(model.config.max_seq));
    }
    for (TokenId t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= model.config.vocab_size) {
            throw InputError("token id " + std::to_string(t) + " outside vocabulary of size " +
                             std::to_string(model.config.vocab_size));
        }
    }
}

}  // namespace sta
