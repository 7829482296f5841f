#include "softworld/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "softworld/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are unsupported");

namespace softworld::nn {

namespace {

struct Entry {
    std::vector<int64_t> shape;
    int64_t offset = 0;
};

std::pair<nlohmann::json, std::string> read_header(const std::filesystem::path& path,
                                                   std::ifstream& in) {
    in.open(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw IoError("truncated checkpoint header: " + path.string());
    nlohmann::json j = nlohmann::json::parse(header, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "softworld-ckpt-1") {
        throw IoError("not a softworld checkpoint: " + path.string());
    }
    return {std::move(j), std::move(header)};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     std::span<const ag::Parameter* const> params, const nlohmann::json& meta) {
    nlohmann::json j;
    j["format"] = "softworld-ckpt-1";
    j["meta"] = meta;
    nlohmann::json plist = nlohmann::json::array();
    int64_t offset = 0;
    for (const ag::Parameter* p : params) {
        nlohmann::json e;
        e["name"] = p->name;
        e["shape"] = p->value.shape();
        e["offset"] = offset;
        plist.push_back(std::move(e));
        offset += p->value.size();
    }
    j["params"] = std::move(plist);

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out << j.dump() << '\n';
    std::vector<float> buf;
    for (const ag::Parameter* p : params) {
        buf.resize(static_cast<size_t>(p->value.size()));
        for (int64_t i = 0; i < p->value.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(p->value[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw IoError("short write: " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, std::span<ag::Parameter* const> params) {
    std::ifstream in;
    auto [j, header] = read_header(path, in);
    const std::streampos blob_start = in.tellg();

    std::map<std::string, Entry> index;
    for (const auto& e : j.at("params")) {
        Entry entry;
        entry.shape = e.at("shape").get<std::vector<int64_t>>();
        entry.offset = e.at("offset").get<int64_t>();
        index[e.at("name").get<std::string>()] = std::move(entry);
    }
    std::vector<float> buf;
    for (ag::Parameter* p : params) {
        auto it = index.find(p->name);
        if (it == index.end()) {
            throw IoError("checkpoint is missing parameter '" + p->name + "'");
        }
        if (it->second.shape != p->value.shape()) {
            throw ShapeError("checkpoint shape mismatch for parameter '" + p->name + "'");
        }
        buf.resize(static_cast<size_t>(p->value.size()));
        in.seekg(blob_start + static_cast<std::streamoff>(it->second.offset * sizeof(float)));
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!in) throw IoError("truncated checkpoint blob: " + path.string());
        for (int64_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<double>(buf[static_cast<size_t>(i)]);
    }
}

nlohmann::json checkpoint_meta(const std::filesystem::path& path) {
    std::ifstream in;
    auto [j, header] = read_header(path, in);
    return j.value("meta", nlohmann::json::object());
}

std::vector<std::pair<std::string, std::vector<int64_t>>> checkpoint_index(
    const std::filesystem::path& path) {
    std::ifstream in;
    auto [j, header] = read_header(path, in);
    std::vector<std::pair<std::string, std::vector<int64_t>>> out;
    for (const auto& e : j.at("params")) {
        out.emplace_back(e.at("name").get<std::string>(), e.at("shape").get<std::vector<int64_t>>());
    }
    return out;
}

}  // namespace softworld::nn
