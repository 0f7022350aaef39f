#include "eopt/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "eopt/dataset.hpp"

namespace eopt {

void ModelConfig::validate() const {
    if (n_layer < 0) throw ConfigError("n_layer must be >= 0");
    if (n_head < 1) throw ConfigError("n_head must be >= 1");
    if (n_embd < 1 || n_embd % n_head != 0)
        throw ConfigError("n_embd " + std::to_string(n_embd) + " must be divisible by n_head " +
                          std::to_string(n_head));
    if (block_size < 2) throw ConfigError("block_size must be >= 2");
    if (in_channels != kNumChannels) throw ConfigError("in_channels must be 14");
    if (out_channels != kNumBands) throw ConfigError("out_channels must be 10");
    if (mlp_hidden_multiplier < 1) throw ConfigError("mlp_hidden_multiplier must be >= 1");
}

ModelConfig model_preset(const std::string& name) {
    ModelConfig c;
    c.name = name;
    if (name == "700M") {
        c.n_layer = 36, c.n_head = 20, c.n_embd = 1280, c.block_size = 256;
    } else if (name == "300M") {
        c.n_layer = 26, c.n_head = 16, c.n_embd = 1024, c.block_size = 256;
    } else if (name == "100M") {
        c.n_layer = 20, c.n_head = 10, c.n_embd = 640, c.block_size = 256;
    } else if (name == "10M") {
        c.n_layer = 10, c.n_head = 10, c.n_embd = 320, c.block_size = 256;
    } else if (name == "toy-128") {
        c.n_layer = 4, c.n_head = 4, c.n_embd = 128, c.block_size = 64;
    } else if (name == "toy-96") {
        c.n_layer = 4, c.n_head = 4, c.n_embd = 96, c.block_size = 64;
    } else if (name == "toy-64") {
        c.n_layer = 3, c.n_head = 4, c.n_embd = 64, c.block_size = 64;
    } else if (name == "toy-32") {
        c.n_layer = 2, c.n_head = 4, c.n_embd = 32, c.block_size = 64;
    } else {
        throw ConfigError("unknown model preset '" + name + "'");
    }
    return c;
}

std::vector<std::string> model_preset_names() {
    return {"700M", "300M", "100M", "10M", "toy-128", "toy-96", "toy-64", "toy-32"};
}

namespace {

// Single source of truth for parameter names and shapes; param_count and
// build_model both walk this list.
void for_each_shape(const ModelConfig& c,
                    const std::function<void(const std::string&, std::vector<int64_t>)>& fn) {
    const int64_t e = c.n_embd, h = c.mlp_hidden(), in = c.in_channels, out = c.out_channels;
    fn("in_mlp.fc1.w", {in, h});
    fn("in_mlp.fc1.b", {h});
    fn("in_mlp.fc2.w", {h, e});
    fn("in_mlp.fc2.b", {e});
    if (c.use_positional) fn("pos", {c.block_size, e});
    for (int l = 0; l < c.n_layer; ++l) {
        const std::string p = "block." + std::to_string(l) + ".";
        fn(p + "ln1.g", {e});
        fn(p + "ln1.b", {e});
        fn(p + "attn.qkv.w", {e, 3 * e});
        fn(p + "attn.qkv.b", {3 * e});
        fn(p + "attn.proj.w", {e, e});
        fn(p + "attn.proj.b", {e});
        fn(p + "ln2.g", {e});
        fn(p + "ln2.b", {e});
        fn(p + "mlp.fc.w", {e, h});
        fn(p + "mlp.fc.b", {h});
        fn(p + "mlp.out.w", {h, e});
        fn(p + "mlp.out.b", {e});
    }
    fn("lnf.g", {e});
    fn("lnf.b", {e});
    fn("head.w", {e, out});
    fn("head.b", {out});
}

}  // namespace

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("in_mlp.fc1.w", in_fc1_w);
    fn("in_mlp.fc1.b", in_fc1_b);
    fn("in_mlp.fc2.w", in_fc2_w);
    fn("in_mlp.fc2.b", in_fc2_b);
    if (config.use_positional) fn("pos", pos);
    for (size_t l = 0; l < blocks.size(); ++l) {
        const std::string p = "block." + std::to_string(l) + ".";
        Block& b = blocks[l];
        fn(p + "ln1.g", b.ln1_g);
        fn(p + "ln1.b", b.ln1_b);
        fn(p + "attn.qkv.w", b.qkv_w);
        fn(p + "attn.qkv.b", b.qkv_b);
        fn(p + "attn.proj.w", b.proj_w);
        fn(p + "attn.proj.b", b.proj_b);
        fn(p + "ln2.g", b.ln2_g);
        fn(p + "ln2.b", b.ln2_b);
        fn(p + "mlp.fc.w", b.fc_w);
        fn(p + "mlp.fc.b", b.fc_b);
        fn(p + "mlp.out.w", b.out_w);
        fn(p + "mlp.out.b", b.out_b);
    }
    fn("lnf.g", lnf_g);
    fn("lnf.b", lnf_b);
    fn("head.w", head_w);
    fn("head.b", head_b);
}

bool ModelParams::all_finite() {
    bool ok = true;
    for_each([&](const std::string&, Tensor& t) { ok = ok && t.all_finite(); });
    return ok;
}

int64_t param_count(const ModelConfig& config) {
    config.validate();
    int64_t total = 0;
    for_each_shape(config, [&](const std::string&, std::vector<int64_t> shape) {
        total += Tensor::count(shape);
    });
    return total;
}

ModelParams build_model(const ModelConfig& config, uint64_t seed) {
    config.validate();
    ModelParams p;
    p.config = config;
    p.blocks.resize(static_cast<size_t>(config.n_layer));

    Rng rng(seed);
    const float base_std = 0.02f;
    const float resid_std =
        config.n_layer > 0 ? base_std / std::sqrt(2.0f * static_cast<float>(config.n_layer))
                           : base_std;

    std::map<std::string, Tensor*> slots;
    p.for_each([&](const std::string& name, Tensor& t) { slots[name] = &t; });

    for_each_shape(config, [&](const std::string& name, std::vector<int64_t> shape) {
        Tensor& t = *slots.at(name);
        const bool is_gain = name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
        const bool is_bias = name.back() == 'b' && !is_gain;
        const bool is_resid = name.find("attn.proj.w") != std::string::npos ||
                              name.find("mlp.out.w") != std::string::npos;
        if (is_gain) {
            t = Tensor::full(std::move(shape), 1.0f);
        } else if (is_bias) {
            t = Tensor::zeros(std::move(shape));
        } else {
            t = Tensor::randn(std::move(shape), rng, is_resid ? resid_std : base_std);
        }
    });
    return p;
}

// ----------------------------- forward graph -----------------------------

ModelGraph model_forward(Tape& tape, ModelParams& params, const Tensor& tokens, bool trainable) {
    const ModelConfig& c = params.config;
    if (tokens.rank() < 2 || tokens.rank() > 3 || tokens.cols() != c.in_channels)
        throw DimensionError("tokens must be [T,14] or [B,T,14], got " + tokens.shape_str());
    const int64_t t_len = tokens.rank() == 3 ? tokens.dim(1) : tokens.dim(0);
    if (t_len < 1) throw DimensionError("empty sequence");
    if (t_len > c.block_size)
        throw DimensionError("sequence length " + std::to_string(t_len) +
                             " exceeds block size " + std::to_string(c.block_size));

    ModelGraph g;
    std::vector<NodeId> ids;
    std::map<std::string, NodeId> node_of;
    params.for_each([&](const std::string& name, Tensor& t) {
        NodeId id = trainable ? tape.input(t) : tape.constant(t);
        ids.push_back(id);
        node_of[name] = id;
    });
    g.param_nodes = std::move(ids);

    NodeId x = tape.constant(tokens);
    NodeId h = tape.add_bias(tape.matmul(x, node_of["in_mlp.fc1.w"]), node_of["in_mlp.fc1.b"]);
    h = tape.gelu(h);
    h = tape.add_bias(tape.matmul(h, node_of["in_mlp.fc2.w"]), node_of["in_mlp.fc2.b"]);
    if (c.use_positional) h = tape.add_time(h, node_of["pos"]);

    for (int l = 0; l < c.n_layer; ++l) {
        const std::string p = "block." + std::to_string(l) + ".";
        NodeId a_in = tape.layer_norm(h, node_of[p + "ln1.g"], node_of[p + "ln1.b"]);
        AttentionWeights w{node_of[p + "attn.qkv.w"], node_of[p + "attn.qkv.b"],
                           node_of[p + "attn.proj.w"], node_of[p + "attn.proj.b"]};
        h = tape.add(h, causal_self_attention(tape, a_in, w, c.n_head));
        NodeId m_in = tape.layer_norm(h, node_of[p + "ln2.g"], node_of[p + "ln2.b"]);
        NodeId m = tape.add_bias(tape.matmul(m_in, node_of[p + "mlp.fc.w"]), node_of[p + "mlp.fc.b"]);
        m = tape.gelu(m);
        m = tape.add_bias(tape.matmul(m, node_of[p + "mlp.out.w"]), node_of[p + "mlp.out.b"]);
        h = tape.add(h, m);
    }

    g.penultimate = tape.layer_norm(h, node_of["lnf.g"], node_of["lnf.b"]);
    g.predictions = tape.add_bias(tape.matmul(g.penultimate, node_of["head.w"]), node_of["head.b"]);
    return g;
}

Tensor forward(ModelParams& params, const Tensor& tokens) {
    Tape tape;
    ModelGraph g = model_forward(tape, params, tokens, false);
    return tape.value(g.predictions);
}

double loss(ModelParams& params, const Tensor& tokens, const Tensor& targets, double delta) {
    Tape tape;
    ModelGraph g = model_forward(tape, params, tokens, false);
    NodeId l = tape.huber(g.predictions, tape.constant(targets), delta);
    return tape.scalar(l);
}

Tensor extract_embeddings(ModelParams& params, const Tensor& tokens) {
    Tape tape;
    ModelGraph g = model_forward(tape, params, tokens, false);
    const Tensor& pen = tape.value(g.penultimate);
    const int64_t t_len = pen.rows(), width = pen.cols();
    Tensor out({width});
    for (int64_t j = 0; j < width; ++j) {
        double acc = 0.0;
        for (int64_t i = 0; i < t_len; ++i) acc += pen.data[i * width + j];
        out.data[j] = static_cast<float>(acc / static_cast<double>(t_len));
    }
    return out;
}

// ----------------------------- checkpoints -----------------------------

namespace {

constexpr char kCkptMagic[4] = {'E', 'O', 'C', 'K'};
constexpr uint32_t kCkptVersion = 1;

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

std::string config_text(const ModelConfig& c) {
    std::ostringstream os;
    os << "name = " << c.name << "\n";
    os << "n_layer = " << c.n_layer << "\n";
    os << "n_head = " << c.n_head << "\n";
    os << "n_embd = " << c.n_embd << "\n";
    os << "block_size = " << c.block_size << "\n";
    os << "in_channels = " << c.in_channels << "\n";
    os << "out_channels = " << c.out_channels << "\n";
    os << "mlp_hidden_multiplier = " << c.mlp_hidden_multiplier << "\n";
    os << "use_positional = " << (c.use_positional ? 1 : 0) << "\n";
    return os.str();
}

ModelConfig config_from_text(const std::string& text) {
    ModelConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const size_t a = s.find_first_not_of(" \t");
            const size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "name") c.name = value;
        else if (key == "n_layer") c.n_layer = std::stoi(value);
        else if (key == "n_head") c.n_head = std::stoi(value);
        else if (key == "n_embd") c.n_embd = std::stoi(value);
        else if (key == "block_size") c.block_size = std::stoi(value);
        else if (key == "in_channels") c.in_channels = std::stoi(value);
        else if (key == "out_channels") c.out_channels = std::stoi(value);
        else if (key == "mlp_hidden_multiplier") c.mlp_hidden_multiplier = std::stoi(value);
        else if (key == "use_positional") c.use_positional = std::stoi(value) != 0;
        else throw FormatError("unknown checkpoint config key '" + key + "'");
    }
    return c;
}

}  // namespace

void save_checkpoint(ModelParams& params, const std::string& path) {
    std::string out;
    out.append(kCkptMagic, 4);
    put<uint32_t>(out, kCkptVersion);
    const std::string cfg = config_text(params.config);
    put<uint32_t>(out, static_cast<uint32_t>(cfg.size()));
    out += cfg;

    uint64_t n_tensors = 0;
    params.for_each([&](const std::string&, Tensor&) { ++n_tensors; });
    put<uint64_t>(out, n_tensors);

    uint64_t offset = 0;
    params.for_each([&](const std::string& name, Tensor& t) {
        put<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out += name;
        put<uint32_t>(out, static_cast<uint32_t>(t.rank()));
        for (int64_t d : t.shape) put<int64_t>(out, d);
        put<uint64_t>(out, offset);
        offset += static_cast<uint64_t>(t.numel()) * 4;
    });
    put<uint64_t>(out, offset);  // payload byte count
    params.for_each([&](const std::string&, Tensor& t) {
        out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * 4);
    });
    write_file_atomic(path, out);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    size_t off = 0;
    auto need = [&](size_t n, const char* what) {
        if (off + n > bytes.size())
            throw FormatError("checkpoint truncated reading " + std::string(what) +
                              " (at offset " + std::to_string(off) + ")");
    };
    auto get_u32 = [&](const char* what) {
        need(4, what);
        uint32_t v;
        std::memcpy(&v, bytes.data() + off, 4);
        off += 4;
        return v;
    };
    auto get_u64 = [&](const char* what) {
        need(8, what);
        uint64_t v;
        std::memcpy(&v, bytes.data() + off, 8);
        off += 8;
        return v;
    };

    need(4, "magic");
    if (std::memcmp(bytes.data(), kCkptMagic, 4) != 0)
        throw FormatError("bad magic at offset 0");
    off = 4;
    const uint32_t version = get_u32("version");
    if (version != kCkptVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                          " at offset 4");
    const uint32_t cfg_len = get_u32("config length");
    need(cfg_len, "config text");
    ModelConfig config = config_from_text(bytes.substr(off, cfg_len));
    off += cfg_len;
    config.validate();

    ModelParams params;
    params.config = config;
    params.blocks.resize(static_cast<size_t>(config.n_layer));

    const uint64_t n_tensors = get_u64("tensor count");
    struct Entry {
        std::string name;
        std::vector<int64_t> shape;
        uint64_t offset;
    };
    std::vector<Entry> entries;
    entries.reserve(n_tensors);
    for (uint64_t i = 0; i < n_tensors; ++i) {
        Entry e;
        const uint32_t name_len = get_u32("tensor name length");
        need(name_len, "tensor name");
        e.name = bytes.substr(off, name_len);
        off += name_len;
        const uint32_t rank = get_u32("tensor rank");
        for (uint32_t r = 0; r < rank; ++r)
            e.shape.push_back(static_cast<int64_t>(get_u64("tensor dim")));
        e.offset = get_u64("tensor offset");
        entries.push_back(std::move(e));
    }
    const uint64_t payload_bytes = get_u64("payload size");
    need(payload_bytes, "payload");
    const size_t payload_start = off;
    if (payload_start + payload_bytes != bytes.size())
        throw FormatError("checkpoint trailing bytes after payload (at offset " +
                          std::to_string(payload_start + payload_bytes) + ")");

    std::map<std::string, Entry*> by_name;
    for (Entry& e : entries) by_name[e.name] = &e;

    params.for_each([&](const std::string& name, Tensor& t) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("checkpoint missing tensor '" + name + "'");
        const Entry& e = *it->second;
        t = Tensor(e.shape);
        const uint64_t nbytes = static_cast<uint64_t>(t.numel()) * 4;
        if (e.offset + nbytes > payload_bytes)
            throw FormatError("tensor '" + name + "' payload out of range (at offset " +
                              std::to_string(payload_start + e.offset) + ")");
        std::memcpy(t.data.data(), bytes.data() + payload_start + e.offset, nbytes);
    });
    return params;
}

}  // namespace eopt
