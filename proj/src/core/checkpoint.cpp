#include "sgxp/core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sgxp {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[] = "SGXP1";
constexpr std::size_t kMagicSize = 5;

void append_block(std::string& out, const Tensor& t) {
    const std::uint64_t bytes = t.size() * sizeof(float);
    out.append(reinterpret_cast<const char*>(&bytes), sizeof bytes);
    out.append(reinterpret_cast<const char*>(t.data()), bytes);
}

void read_block(const std::string& in, std::size_t& pos, Tensor& t, const std::string& name) {
    std::uint64_t bytes = 0;
    if (pos + sizeof bytes > in.size()) throw FormatError("truncated block header for '" + name + "'", pos);
    std::memcpy(&bytes, in.data() + pos, sizeof bytes);
    if (bytes != t.size() * sizeof(float)) {
        throw FormatError("block '" + name + "' has " + std::to_string(bytes) + " bytes, expected " +
                              std::to_string(t.size() * sizeof(float)),
                          pos);
    }
    pos += sizeof bytes;
    if (pos + bytes > in.size()) throw FormatError("truncated block '" + name + "'", pos);
    std::memcpy(t.data(), in.data() + pos, bytes);
    pos += bytes;
}

}  // namespace

std::string serialize_checkpoint(const Network<float>& net, const nlohmann::json& metadata) {
    nlohmann::json arch;
    arch["input_shape"] = net.input_shape();
    arch["feature_node"] = net.feature_node();
    auto& nodes = arch["nodes"] = nlohmann::json::array();
    for (const auto& n : net.nodes()) {
        nodes.push_back({{"name", n.name}, {"layer", layer_to_json(n.layer)}, {"inputs", n.inputs},
                         {"freezable", n.freezable}});
    }
    auto& params = arch["parameters"] = nlohmann::json::array();
    for (const auto& p : net.parameters()) params.push_back({{"name", p.name}, {"shape", p.value.shape()}});
    auto& buffers = arch["buffers"] = nlohmann::json::array();
    for (const auto& b : net.buffers()) buffers.push_back({{"name", b.name}, {"shape", b.value.shape()}});
    arch["metadata"] = metadata;

    std::string out(kMagic, kMagicSize);
    out += arch.dump();
    out += '\n';
    for (const auto& p : net.parameters()) append_block(out, p.value);
    for (const auto& b : net.buffers()) append_block(out, b.value);
    return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < kMagicSize || bytes.compare(0, kMagicSize, kMagic) != 0) {
        throw FormatError("not a checkpoint (bad magic)", 0);
    }
    const std::size_t eol = bytes.find('\n', kMagicSize);
    if (eol == std::string::npos) throw FormatError("architecture header is not terminated", kMagicSize);
    nlohmann::json arch;
    try {
        arch = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(kMagicSize),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(eol));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("architecture header is not valid JSON: ") + e.what(), kMagicSize);
    }

    Checkpoint ck;
    try {
        ck.network = Network<float>(arch.at("input_shape").get<Shape>());
        for (const auto& n : arch.at("nodes")) {
            ck.network.add(n.at("name"), layer_from_json(n.at("layer")), n.at("inputs").get<std::vector<int>>(),
                           n.at("freezable").get<bool>());
        }
        ck.network.set_feature_node(arch.at("feature_node").get<int>());
        ck.metadata = arch.value("metadata", nlohmann::json::object());
        const auto& params = arch.at("parameters");
        const auto& buffers = arch.at("buffers");
        if (params.size() != ck.network.parameters().size() || buffers.size() != ck.network.buffers().size()) {
            throw FormatError("parameter list does not match the architecture", kMagicSize);
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i].at("name") != ck.network.parameters()[i].name ||
                params[i].at("shape").get<Shape>() != ck.network.parameters()[i].value.shape()) {
                throw FormatError("parameter '" + params[i].at("name").get<std::string>() + "' does not match", kMagicSize);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("incomplete architecture header: ") + e.what(), kMagicSize);
    }

    std::size_t pos = eol + 1;
    for (auto& p : ck.network.parameters()) read_block(bytes, pos, p.value, p.name);
    for (auto& b : ck.network.buffers()) read_block(bytes, pos, b.value, b.name);
    if (pos != bytes.size()) throw FormatError("trailing bytes after last block", pos);
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Network<float>& net, const nlohmann::json& metadata) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::string bytes = serialize_checkpoint(net, metadata);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_checkpoint(buf.str());
}

}  // namespace sgxp
