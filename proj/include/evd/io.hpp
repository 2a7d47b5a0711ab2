#pragma once

#include <fstream>
#include <string>

#include "evd/backbone.hpp"
#include "evd/losses.hpp"
#include "evd/scene.hpp"
#include "evd/tensor.hpp"

namespace evd {

// Binary container for latent tensors (see docs/FORMATS.md):
//   8 x int64 little-endian header: version, T, H, W, C, a, b, c
//   followed by T*H*W*C float64 little-endian values in t/h/w/channel order.
// For plain latents the trailing ints are zero; scenes use (tau_e, tau_s, N).

void save_latent(const std::string& path, const LatentVideo& z);
LatentVideo load_latent(const std::string& path);

/// Scene binary plus a JSON sidecar at path + ".json" holding the geometry,
/// patch spec, drift pattern, and truth activity.
void save_scene(const std::string& path, const ContactScene& scene);
ContactScene load_scene(const std::string& path);

/// Parameter checkpoint: magic "EVDCKPT1", u64 LE manifest length, JSON
/// manifest (named arrays with offsets/sizes plus the model configs), then
/// the concatenated float64 little-endian arrays.
void save_checkpoint(const std::string& path, const MicroDiT& model, const EventHead& head);

struct LoadedCheckpoint {
    MicroDiT model;
    EventHead head;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

/// Writes the EMA shadow as an ordinary checkpoint.
void save_ema_checkpoint(const std::string& path, const MicroDiT& model, const EventHead& head,
                         const EmaState& ema);

/// Line-delimited JSON records.
class JsonlWriter {
public:
    explicit JsonlWriter(const std::string& path);
    void write_line(const std::string& json);

private:
    std::ofstream out_;
};

}  // namespace evd
