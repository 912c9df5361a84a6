#include "tvssm/serialize.hpp"

#include <fstream>
#include <sstream>

#include "tvssm/errors.hpp"

namespace tvssm {

namespace {

template <typename T>
T field(const json& j, const char* key, T fallback) {
    auto it = j.find(key);
    return it == j.end() ? fallback : it->get<T>();
}

json matrix_json(const Matrix& m) { return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}}; }

Matrix matrix_from_json(const json& j) {
    Matrix m;
    m.rows = j.at("rows").get<std::size_t>();
    m.cols = j.at("cols").get<std::size_t>();
    m.data = j.at("data").get<std::vector<double>>();
    if (m.data.size() != m.rows * m.cols) throw IoError("matrix payload has the wrong number of values");
    return m;
}

json param_json(const TimeVaryingMatrixParam& p) {
    return {{"rows", p.rows}, {"cols", p.cols}, {"diagonal", p.diagonal}, {"dictionary", to_json(p.dict)},
            {"coeffs", p.coeffs}};
}

TimeVaryingMatrixParam param_from_json(const json& j) {
    TimeVaryingMatrixParam p;
    p.rows = j.at("rows").get<std::size_t>();
    p.cols = j.at("cols").get<std::size_t>();
    p.diagonal = j.at("diagonal").get<bool>();
    p.dict = dictionary_from_json(j.at("dictionary"));
    p.coeffs = j.at("coeffs").get<std::vector<double>>();
    p.validate();
    return p;
}

}  // namespace

json to_json(const BasisDictionary& dict) {
    json fns = json::array();
    for (const auto& f : dict.functions()) {
        if (f.kind == BasisKind::Constant)
            fns.push_back({{"kind", "constant"}});
        else
            fns.push_back({{"kind", "gaussian"}, {"mu", f.mu}, {"sigma", f.sigma}});
    }
    return {{"horizon", dict.horizon()}, {"functions", fns}};
}

BasisDictionary dictionary_from_json(const json& j) {
    std::vector<BasisFunction> fns;
    for (const auto& f : j.at("functions")) {
        const auto kind = f.at("kind").get<std::string>();
        if (kind == "constant")
            fns.push_back(BasisFunction::constant());
        else if (kind == "gaussian")
            fns.push_back(BasisFunction::gaussian(f.at("mu").get<double>(), f.at("sigma").get<double>()));
        else
            throw IoError("unknown basis kind '" + kind + "'");
    }
    return BasisDictionary(std::move(fns), j.at("horizon").get<std::size_t>());
}

std::string activation_name(Activation a) { return a == Activation::GELU ? "gelu" : "identity"; }

Activation parse_activation(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "gelu") return Activation::GELU;
    throw InvalidArgument("unknown activation '" + s + "' (expected identity|gelu)");
}

json to_json(const LayerSpec& s) {
    return {{"h", s.h},         {"n", s.n},         {"n_in", s.n_in},       {"n_out", s.n_out},
            {"K_A", s.K_A},     {"K_B", s.K_B},     {"K_C", s.K_C},         {"tv_A", s.tv_A},
            {"tv_B", s.tv_B},   {"tv_C", s.tv_C},   {"activation", activation_name(s.activation)},
            {"dense_A", s.dense_A}};
}

LayerSpec layer_spec_from_json(const json& j) {
    LayerSpec s;
    s.h = field(j, "h", s.h);
    s.n = field(j, "n", s.n);
    s.n_in = field(j, "n_in", s.n_in);
    s.n_out = field(j, "n_out", s.n_out);
    s.K_A = field(j, "K_A", s.K_A);
    s.K_B = field(j, "K_B", s.K_B);
    s.K_C = field(j, "K_C", s.K_C);
    s.tv_A = field(j, "tv_A", s.tv_A);
    s.tv_B = field(j, "tv_B", s.tv_B);
    s.tv_C = field(j, "tv_C", s.tv_C);
    s.activation = parse_activation(field<std::string>(j, "activation", "identity"));
    s.dense_A = field(j, "dense_A", s.dense_A);
    return s;
}

json to_json(const NetworkSpec& s) {
    json layers = json::array();
    for (const auto& l : s.layers) layers.push_back(to_json(l));
    return {{"input_channels", s.input_channels}, {"output_channels", s.output_channels}, {"T", s.T},
            {"use_norm", s.use_norm}, {"share_dictionary", s.share_dictionary}, {"layers", layers}};
}

NetworkSpec network_spec_from_json(const json& j) {
    NetworkSpec s;
    s.input_channels = field(j, "input_channels", s.input_channels);
    s.output_channels = field(j, "output_channels", s.output_channels);
    s.T = field(j, "T", s.T);
    s.use_norm = field(j, "use_norm", s.use_norm);
    s.share_dictionary = field(j, "share_dictionary", s.share_dictionary);
    for (const auto& l : j.at("layers")) s.layers.push_back(layer_spec_from_json(l));
    s.validate();
    return s;
}

json to_json(const NetworkParams& p) {
    json layers = json::array();
    for (const auto& layer : p.layers) {
        json neurons = json::array();
        for (const auto& nr : layer.neurons)
            neurons.push_back({{"A", param_json(nr.A)}, {"B", param_json(nr.B)}, {"C", param_json(nr.C)},
                               {"c_bias", nr.c_bias}});
        json entry = {{"neurons", neurons}, {"W", matrix_json(layer.W)}};
        if (!layer.norm.scale.empty())
            entry["norm"] = {{"scale", layer.norm.scale}, {"shift", layer.norm.shift},
                             {"running_mean", layer.norm.running_mean}, {"running_var", layer.norm.running_var}};
        layers.push_back(entry);
    }
    return {{"spec", to_json(p.spec)}, {"W_in", matrix_json(p.W_in)}, {"layers", layers}};
}

NetworkParams network_params_from_json(const json& j) {
    NetworkParams p;
    p.spec = network_spec_from_json(j.at("spec"));
    p.W_in = matrix_from_json(j.at("W_in"));
    for (const auto& lj : j.at("layers")) {
        LayerParams layer;
        for (const auto& nj : lj.at("neurons")) {
            SSMNeuron nr{param_from_json(nj.at("A")), param_from_json(nj.at("B")), param_from_json(nj.at("C")),
                         nj.at("c_bias").get<std::vector<double>>()};
            nr.validate();
            layer.neurons.push_back(std::move(nr));
        }
        layer.W = matrix_from_json(lj.at("W"));
        if (lj.contains("norm")) {
            const auto& nj = lj.at("norm");
            layer.norm = {nj.at("scale").get<std::vector<double>>(), nj.at("shift").get<std::vector<double>>(),
                          nj.at("running_mean").get<std::vector<double>>(),
                          nj.at("running_var").get<std::vector<double>>()};
        }
        p.layers.push_back(std::move(layer));
    }
    if (p.layers.size() != p.spec.layers.size()) throw IoError("checkpoint layer count does not match its spec");
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& L = p.spec.layers[l];
        if (p.layers[l].neurons.size() != L.h) throw IoError("checkpoint neuron count does not match its spec");
        if (p.layers[l].W.rows != p.spec.mixing_rows(l) || p.layers[l].W.cols != L.out_width())
            throw IoError("checkpoint mixing matrix shape does not match its spec");
    }
    return p;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params) {
    json j = {{"format", "tvssm-checkpoint"}, {"version", kCheckpointVersion}, {"network", to_json(params)}};
    write_text_file(path, j.dump() + "\n");
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw IoError("corrupt checkpoint '" + path.string() + "': " + e.what());
    }
    if (j.value("format", "") != "tvssm-checkpoint") throw IoError("'" + path.string() + "' is not a checkpoint");
    if (j.value("version", 0) != kCheckpointVersion)
        throw IoError("unsupported checkpoint version in '" + path.string() + "'");
    try {
        return network_params_from_json(j.at("network"));
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint '" + path.string() + "': " + e.what());
    }
}

}  // namespace tvssm
