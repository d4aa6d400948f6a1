#ifndef EVFI_DATASET_HPP
#define EVFI_DATASET_HPP

#include <string>
#include <vector>

#include "evfi/events.hpp"
#include "evfi/flow.hpp"
#include "evfi/simulator.hpp"
#include "evfi/tensor.hpp"

#include "json.hpp"

namespace evfi {

// One (window, target) training/eval sample. All paths are relative to the
// dataset root. Ground-truth flow and mask references are optional side data
// consumed by the gt flow estimator and the evaluation harness.
struct SampleManifest {
    std::string sample_id;
    std::vector<std::string> frame_paths; // ordered: boundary0, inner..., boundary1
    std::vector<double> frame_timestamps;
    std::vector<int> target_indices; // indices into frame_paths, strictly inside
    std::string event_path;
    int skip_factor = 1;
    int width = 0, height = 0;

    std::string flow01_path, flow10_path;
    std::vector<std::string> target_flow_t0_paths, target_flow_t1_paths, target_mask_paths;

    nlohmann::json to_json() const;
    static SampleManifest from_json(const nlohmann::json& j);
};

struct DatasetLayout {
    std::string root;
    std::vector<SampleManifest> samples;
};

// Sliding windows with boundaries skip+1 frames apart; every inner frame of a
// window becomes its own (window, target) manifest. Paths are filled in by
// the writer.
std::vector<SampleManifest> build_samples(const FrameSequence& seq, const EventStream& events,
                                          int skip, const std::string& id_prefix = "sample");

struct LoadedSample {
    Tensor i0, i1;
    std::vector<Tensor> targets;
    std::vector<double> target_times; // normalized into (0,1)
    // per target, absolute-time slices [t0, t_target) and [t_target, t1)
    std::vector<EventStream> events_before, events_after;
    EventStream window_events;

    bool has_flows = false;
    FlowField f01, f10;
    std::vector<FlowField> ft0_true, ft1_true;
    std::vector<Tensor> masks;
};

LoadedSample load_sample(const std::string& root, const SampleManifest& manifest);

// Model-facing view of one (sample, target): frames, normalized event slices
// and ground-truth side data.
struct SampleInputs {
    std::string sample_id;
    Tensor i0, i1, target;
    double t = 0.5;
    EventStream events_0t, events_t1; // normalized windows [0,t) and [t,1)
    bool has_flows = false;
    FlowField f01, f10;
    bool has_true_flows = false;
    FlowField ft0_true, ft1_true;
    Tensor object_mask; // (H,W) at target time; empty when absent
};

SampleInputs to_sample_inputs(const LoadedSample& loaded, const SampleManifest& manifest,
                              size_t target_slot);

// index (JSON lines) I/O; unique ids enforced on load
DatasetLayout load_dataset(const std::string& root);
void write_index(const DatasetLayout& layout);

std::vector<SampleInputs> load_all_inputs(const std::string& root);

// Renders one scene into the dataset directory: frames as PNG, per-window
// event slices in EVT1, boundary/target flows, target masks, and the
// manifests appended to the layout. Files are written via temp + rename.
struct SceneWriteStats {
    size_t n_samples = 0;
    size_t n_events = 0;
};
SceneWriteStats write_scene_samples(DatasetLayout& layout, const std::string& scene_name,
                                    const Scene& scene, int skip, const SimulatorConfig& sim);

} // namespace evfi

#endif
