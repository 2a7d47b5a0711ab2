#include "evd/io.hpp"

#include <cstdint>
#include <cstring>
#include <vector>

#include <json.hpp>

namespace evd {

using nlohmann::json;

namespace {

// The container is defined little-endian; this implementation targets
// little-endian hosts and writes raw int64/f64 words.
static_assert(sizeof(double) == 8, "f64 container requires 8-byte double");

void write_header(std::ofstream& out, const int64_t h[8]) {
    out.write(reinterpret_cast<const char*>(h), 8 * sizeof(int64_t));
}

void read_header(std::ifstream& in, int64_t h[8]) {
    in.read(reinterpret_cast<char*>(h), 8 * sizeof(int64_t));
    if (!in) throw IoError("short read in tensor header");
}

void write_f64(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void save_latent(const std::string& path, const LatentVideo& z) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    const int64_t h[8] = {1, z.frames(), z.height(), z.width(), z.channels(), 0, 0, 0};
    write_header(out, h);
    write_f64(out, z.data());
    if (!out) throw IoError("write failed for " + path);
}

LatentVideo load_latent(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    int64_t h[8];
    read_header(in, h);
    if (h[0] != 1) throw IoError("unsupported tensor container version in " + path);
    LatentVideo z(static_cast<int>(h[1]), static_cast<int>(h[2]), static_cast<int>(h[3]),
                  static_cast<int>(h[4]));
    in.read(reinterpret_cast<char*>(z.data().data()),
            static_cast<std::streamsize>(z.data().size() * sizeof(double)));
    if (!in) throw IoError("short read in " + path);
    return z;
}

void save_scene(const std::string& path, const ContactScene& scene) {
    const SceneParams& p = scene.params;
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open " + path + " for writing");
        const int64_t h[8] = {1,
                              p.t,
                              p.h,
                              p.w,
                              p.c,
                              p.tau_e,
                              p.tau_s,
                              static_cast<int64_t>(scene.truth_activity.size())};
        write_header(out, h);
        write_f64(out, scene.clean_latent.data());
        if (!out) throw IoError("write failed for " + path);
    }
    json meta;
    meta["version"] = 1;
    meta["patch"] = {p.patch.p_t, p.patch.p_h, p.patch.p_w};
    meta["blob"] = {{"h", p.blob_h}, {"w", p.blob_w}, {"row0", p.row0}, {"col0", p.col0},
                    {"vel_r", p.vel_r}, {"vel_c", p.vel_c}, {"value", p.blob_value}};
    meta["window"] = {p.tau_e, p.tau_s};
    meta["noise_sigma"] = p.noise_sigma;
    meta["noise_seed"] = p.noise_seed;
    meta["camera_drift"] = p.camera_drift;
    meta["truth_activity"] = scene.truth_activity;
    std::ofstream side(path + ".json");
    if (!side) throw IoError("cannot open " + path + ".json for writing");
    side << meta.dump(2) << "\n";
}

ContactScene load_scene(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    int64_t h[8];
    read_header(in, h);
    if (h[0] != 1) throw IoError("unsupported scene container version in " + path);

    ContactScene scene;
    scene.clean_latent = LatentVideo(static_cast<int>(h[1]), static_cast<int>(h[2]),
                                     static_cast<int>(h[3]), static_cast<int>(h[4]));
    in.read(reinterpret_cast<char*>(scene.clean_latent.data().data()),
            static_cast<std::streamsize>(scene.clean_latent.data().size() * sizeof(double)));
    if (!in) throw IoError("short read in " + path);

    std::ifstream side(path + ".json");
    if (!side) throw IoError("missing sidecar " + path + ".json");
    json meta = json::parse(side);

    SceneParams p;
    p.t = static_cast<int>(h[1]);
    p.h = static_cast<int>(h[2]);
    p.w = static_cast<int>(h[3]);
    p.c = static_cast<int>(h[4]);
    p.tau_e = static_cast<int>(h[5]);
    p.tau_s = static_cast<int>(h[6]);
    p.patch = PatchSpec{meta["patch"][0], meta["patch"][1], meta["patch"][2]};
    p.blob_h = meta["blob"]["h"];
    p.blob_w = meta["blob"]["w"];
    p.row0 = meta["blob"]["row0"];
    p.col0 = meta["blob"]["col0"];
    p.vel_r = meta["blob"]["vel_r"];
    p.vel_c = meta["blob"]["vel_c"];
    p.blob_value = meta["blob"]["value"];
    p.noise_sigma = meta["noise_sigma"];
    p.noise_seed = meta["noise_seed"];
    p.camera_drift = meta["camera_drift"].get<std::vector<double>>();
    scene.params = p;
    scene.truth_activity = meta["truth_activity"].get<std::vector<uint8_t>>();
    if (static_cast<int64_t>(scene.truth_activity.size()) != h[7]) {
        throw IoError("sidecar truth_activity length disagrees with header in " + path);
    }
    return scene;
}

namespace {

json dit_config_json(const DiTConfig& c) {
    return json{{"t", c.t},         {"h", c.h},
                {"w", c.w},         {"c", c.c},
                {"patch", {c.patch.p_t, c.patch.p_h, c.patch.p_w}},
                {"width", c.width}, {"layers", c.layers},
                {"heads", c.heads}, {"cond_dim", c.cond_dim},
                {"mlp_ratio", c.mlp_ratio}};
}

DiTConfig dit_config_from_json(const json& j) {
    DiTConfig c;
    c.t = j["t"];
    c.h = j["h"];
    c.w = j["w"];
    c.c = j["c"];
    c.patch = PatchSpec{j["patch"][0], j["patch"][1], j["patch"][2]};
    c.width = j["width"];
    c.layers = j["layers"];
    c.heads = j["heads"];
    c.cond_dim = j["cond_dim"];
    c.mlp_ratio = j["mlp_ratio"];
    return c;
}

json head_config_json(const EventHeadConfig& c) {
    return json{{"feature_dim", c.feature_dim},
                {"time_dim", c.time_dim},
                {"hidden", c.hidden},
                {"channels", c.channels}};
}

EventHeadConfig head_config_from_json(const json& j) {
    EventHeadConfig c;
    c.feature_dim = j["feature_dim"];
    c.time_dim = j["time_dim"];
    c.hidden = j["hidden"];
    c.channels = j["channels"];
    return c;
}

void write_checkpoint_impl(const std::string& path, const MicroDiT& model, const EventHead& head,
                           const std::vector<double>* model_override,
                           const std::vector<double>* head_override) {
    json manifest;
    manifest["version"] = 1;
    manifest["meta"] = {{"dit", dit_config_json(model.cfg)},
                        {"head", head_config_json(head.cfg)},
                        {"tool", kVersionString}};
    json arrays = json::array();
    int64_t offset = 0;
    // head params already carry the "head." prefix in their names
    for (const auto& p : model.params.all()) {
        arrays.push_back({{"name", "dit." + p.name},
                          {"rows", p.rows},
                          {"cols", p.cols},
                          {"offset", offset},
                          {"size", static_cast<int64_t>(p.size())}});
        offset += static_cast<int64_t>(p.size());
    }
    for (const auto& p : head.params.all()) {
        arrays.push_back({{"name", p.name},
                          {"rows", p.rows},
                          {"cols", p.cols},
                          {"offset", offset},
                          {"size", static_cast<int64_t>(p.size())}});
        offset += static_cast<int64_t>(p.size());
    }
    manifest["arrays"] = arrays;
    const std::string mjson = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write("EVDCKPT1", 8);
    const uint64_t len = mjson.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));

    if (model_override) {
        write_f64(out, *model_override);
    } else {
        for (const auto& p : model.params.all()) write_f64(out, p.w);
    }
    if (head_override) {
        write_f64(out, *head_override);
    } else {
        for (const auto& p : head.params.all()) write_f64(out, p.w);
    }
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace

void save_checkpoint(const std::string& path, const MicroDiT& model, const EventHead& head) {
    write_checkpoint_impl(path, model, head, nullptr, nullptr);
}

void save_ema_checkpoint(const std::string& path, const MicroDiT& model, const EventHead& head,
                         const EmaState& ema) {
    write_checkpoint_impl(path, model, head, &ema.model_shadow, &ema.head_shadow);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "EVDCKPT1", 8) != 0) {
        throw IoError(path + " is not an evd checkpoint");
    }
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string mjson(len, '\0');
    in.read(mjson.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("short read in checkpoint manifest " + path);
    json manifest = json::parse(mjson);

    LoadedCheckpoint ck{MicroDiT(dit_config_from_json(manifest["meta"]["dit"])),
                        EventHead(head_config_from_json(manifest["meta"]["head"]))};

    for (const auto& arr : manifest["arrays"]) {
        const std::string name = arr["name"];
        const std::size_t size = arr["size"];
        std::vector<double> buf(size);
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(size * sizeof(double)));
        if (!in) throw IoError("short read in checkpoint array " + name);
        if (name.starts_with("dit.")) {
            auto& p = ck.model.params.at(name.substr(4));
            if (p.size() != size) throw IoError("size mismatch for " + name);
            p.w = std::move(buf);
        } else if (name.starts_with("head.")) {
            auto& p = ck.head.params.at(name);
            if (p.size() != size) throw IoError("size mismatch for " + name);
            p.w = std::move(buf);
        } else {
            throw IoError("unknown array prefix in " + name);
        }
    }
    return ck;
}

JsonlWriter::JsonlWriter(const std::string& path) : out_(path) {
    if (!out_) throw IoError("cannot open " + path + " for writing");
}

void JsonlWriter::write_line(const std::string& json_text) {
    out_ << json_text << "\n";
    out_.flush();
}

}  // namespace evd
