#include "evfi/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "evfi/image_io.hpp"

namespace fs = std::filesystem;

namespace evfi {

nlohmann::json SampleManifest::to_json() const {
    nlohmann::json j{{"sample_id", sample_id},
                     {"frames", frame_paths},
                     {"timestamps", frame_timestamps},
                     {"targets", target_indices},
                     {"events", event_path},
                     {"skip", skip_factor},
                     {"width", width},
                     {"height", height}};
    if (!flow01_path.empty()) {
        j["flows"] = {{"f01", flow01_path},
                      {"f10", flow10_path},
                      {"ft0", target_flow_t0_paths},
                      {"ft1", target_flow_t1_paths},
                      {"masks", target_mask_paths}};
    }
    return j;
}

SampleManifest SampleManifest::from_json(const nlohmann::json& j) {
    SampleManifest m;
    m.sample_id = j.at("sample_id").get<std::string>();
    m.frame_paths = j.at("frames").get<std::vector<std::string>>();
    m.frame_timestamps = j.at("timestamps").get<std::vector<double>>();
    m.target_indices = j.at("targets").get<std::vector<int>>();
    m.event_path = j.at("events").get<std::string>();
    m.skip_factor = j.at("skip").get<int>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    if (j.contains("flows")) {
        const auto& f = j.at("flows");
        m.flow01_path = f.at("f01").get<std::string>();
        m.flow10_path = f.at("f10").get<std::string>();
        m.target_flow_t0_paths = f.at("ft0").get<std::vector<std::string>>();
        m.target_flow_t1_paths = f.at("ft1").get<std::vector<std::string>>();
        m.target_mask_paths = f.at("masks").get<std::vector<std::string>>();
    }
    return m;
}

std::vector<SampleManifest> build_samples(const FrameSequence& seq, const EventStream& events,
                                          int skip, const std::string& id_prefix) {
    const int n = static_cast<int>(seq.frames.size());
    if (skip < 1) throw Error("TooFewTargets", "skip factor must be >= 1 (k inner frames)");
    if (n < skip + 2) throw Error("TooFewFrames", "need at least skip+2 frames");
    std::vector<SampleManifest> out;
    for (int first = 0; first + skip + 1 < n; ++first) {
        const int last = first + skip + 1;
        for (int target = first + 1; target < last; ++target) {
            SampleManifest m;
            m.sample_id = id_prefix + "_w" + std::to_string(first) + "_t" +
                          std::to_string(target - first);
            m.width = events.width;
            m.height = events.height;
            m.skip_factor = skip;
            for (int f = first; f <= last; ++f)
                m.frame_timestamps.push_back(seq.timestamps[static_cast<size_t>(f)]);
            m.target_indices.push_back(target - first);
            out.push_back(std::move(m));
        }
    }
    return out;
}

namespace {

void atomic_rename(const std::string& tmp, const std::string& final_path) {
    fs::rename(tmp, final_path);
}

std::string join(const std::string& root, const std::string& rel) {
    return (fs::path(root) / rel).string();
}

void require_exists(const std::string& path) {
    if (!fs::exists(path)) throw Error("MissingFile", path + " does not exist");
}

} // namespace

LoadedSample load_sample(const std::string& root, const SampleManifest& m) {
    LoadedSample s;
    for (const auto& p : m.frame_paths) require_exists(join(root, p));
    require_exists(join(root, m.event_path));

    s.i0 = load_png(join(root, m.frame_paths.front()));
    s.i1 = load_png(join(root, m.frame_paths.back()));
    s.window_events = read_evt(join(root, m.event_path));
    const double t0 = m.frame_timestamps.front(), t1 = m.frame_timestamps.back();
    for (int idx : m.target_indices) {
        if (idx <= 0 || idx + 1 >= static_cast<int>(m.frame_paths.size()))
            throw Error("InvalidConfig", "target index not strictly inside the window");
        s.targets.push_back(load_png(join(root, m.frame_paths[static_cast<size_t>(idx)])));
        double tau = m.frame_timestamps[static_cast<size_t>(idx)];
        s.target_times.push_back((tau - t0) / (t1 - t0));
        s.events_before.push_back(crop_window(s.window_events, t0, tau));
        s.events_after.push_back(crop_window(s.window_events, tau, t1));
    }
    if (!m.flow01_path.empty()) {
        s.has_flows = true;
        s.f01 = read_flo(join(root, m.flow01_path));
        s.f10 = read_flo(join(root, m.flow10_path));
        for (size_t i = 0; i < m.target_flow_t0_paths.size(); ++i) {
            s.ft0_true.push_back(read_flo(join(root, m.target_flow_t0_paths[i])));
            s.ft1_true.push_back(read_flo(join(root, m.target_flow_t1_paths[i])));
        }
        for (const auto& p : m.target_mask_paths) {
            Tensor rgb = load_png(join(root, p));
            Tensor mask({rgb.dim(1), rgb.dim(2)});
            for (int y = 0; y < rgb.dim(1); ++y)
                for (int x = 0; x < rgb.dim(2); ++x) mask.at(y, x) = rgb.at(0, y, x) > 0.5 ? 1.0 : 0.0;
            s.masks.push_back(std::move(mask));
        }
    }
    return s;
}

SampleInputs to_sample_inputs(const LoadedSample& loaded, const SampleManifest& manifest,
                              size_t target_slot) {
    if (target_slot >= loaded.targets.size())
        throw Error("InvalidConfig", "target slot out of range");
    SampleInputs in;
    in.sample_id = manifest.sample_id +
                   (loaded.targets.size() > 1 ? "#" + std::to_string(target_slot) : "");
    in.i0 = loaded.i0;
    in.i1 = loaded.i1;
    in.target = loaded.targets[target_slot];
    in.t = loaded.target_times[target_slot];
    // normalized event windows [0,t) and [t,1)
    EventStream norm = normalize_window(loaded.window_events);
    in.events_0t = crop_window(norm, 0.0, in.t);
    in.events_t1 = crop_window(norm, in.t, 1.0);
    if (loaded.has_flows) {
        in.has_flows = true;
        in.f01 = loaded.f01;
        in.f10 = loaded.f10;
        if (target_slot < loaded.ft0_true.size()) {
            in.has_true_flows = true;
            in.ft0_true = loaded.ft0_true[target_slot];
            in.ft1_true = loaded.ft1_true[target_slot];
        }
        if (target_slot < loaded.masks.size()) in.object_mask = loaded.masks[target_slot];
    }
    return in;
}

DatasetLayout load_dataset(const std::string& root) {
    DatasetLayout layout;
    layout.root = root;
    std::string index = join(root, "index.jsonl");
    std::ifstream is(index);
    if (!is) throw Error("MissingDataset", "no index.jsonl under " + root);
    std::string line;
    std::set<std::string> ids;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto m = SampleManifest::from_json(nlohmann::json::parse(line));
        if (!ids.insert(m.sample_id).second)
            throw Error("InvalidConfig", "duplicate sample_id " + m.sample_id);
        layout.samples.push_back(std::move(m));
    }
    return layout;
}

void write_index(const DatasetLayout& layout) {
    fs::create_directories(layout.root);
    std::string path = join(layout.root, "index.jsonl");
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw Error("MissingFile", "cannot write " + tmp);
        for (const auto& m : layout.samples) os << m.to_json().dump() << "\n";
    }
    atomic_rename(tmp, path);
}

std::vector<SampleInputs> load_all_inputs(const std::string& root) {
    DatasetLayout layout = load_dataset(root);
    std::vector<SampleInputs> out;
    for (const auto& m : layout.samples) {
        LoadedSample s = load_sample(root, m);
        for (size_t slot = 0; slot < s.targets.size(); ++slot)
            out.push_back(to_sample_inputs(s, m, slot));
    }
    return out;
}

SceneWriteStats write_scene_samples(DatasetLayout& layout, const std::string& scene_name,
                                    const Scene& scene, int skip, const SimulatorConfig& sim) {
    fs::create_directories(join(layout.root, "frames"));
    fs::create_directories(join(layout.root, "events"));
    fs::create_directories(join(layout.root, "flows"));
    fs::create_directories(join(layout.root, "masks"));

    const FrameSequence& seq = scene.frames();
    EventStream events = simulate(seq, sim);

    // frames are shared by all windows of the scene
    std::vector<std::string> frame_rel(seq.frames.size());
    for (size_t i = 0; i < seq.frames.size(); ++i) {
        frame_rel[i] = "frames/" + scene_name + "_f" + std::to_string(i) + ".png";
        std::string path = join(layout.root, frame_rel[i]);
        save_png(path + ".tmp.png", seq.frames[i]);
        atomic_rename(path + ".tmp.png", path);
    }

    SceneWriteStats stats;
    stats.n_events = events.count();
    auto manifests = build_samples(seq, events, skip, scene_name);
    const int n_frames = static_cast<int>(seq.frames.size());

    for (auto& m : manifests) {
        // recover the window's absolute frame indices from the timestamps
        int first = 0;
        while (seq.timestamps[static_cast<size_t>(first)] != m.frame_timestamps.front()) ++first;
        int last = first + skip + 1;
        (void)n_frames;

        for (int f = first; f <= last; ++f)
            m.frame_paths.push_back(frame_rel[static_cast<size_t>(f)]);

        std::string wname = scene_name + "_w" + std::to_string(first);
        m.event_path = "events/" + wname + ".evt";
        std::string epath = join(layout.root, m.event_path);
        if (!fs::exists(epath)) {
            EventStream window = crop_window(events, seq.timestamps[static_cast<size_t>(first)],
                                             seq.timestamps[static_cast<size_t>(last)]);
            write_evt(epath + ".tmp", window);
            atomic_rename(epath + ".tmp", epath);
        }

        // boundary flows (anchored at the window ends) and per-target truth
        m.flow01_path = "flows/" + wname + "_f01.flo2";
        m.flow10_path = "flows/" + wname + "_f10.flo2";
        if (!fs::exists(join(layout.root, m.flow01_path))) {
            FlowField f01 = scene.flow_between(first, last);
            FlowField f10 = scene.flow_between(last, first);
            write_flo(join(layout.root, m.flow01_path) + ".tmp", f01);
            atomic_rename(join(layout.root, m.flow01_path) + ".tmp",
                          join(layout.root, m.flow01_path));
            write_flo(join(layout.root, m.flow10_path) + ".tmp", f10);
            atomic_rename(join(layout.root, m.flow10_path) + ".tmp",
                          join(layout.root, m.flow10_path));
        }
        for (int rel_idx : m.target_indices) {
            int target = first + rel_idx;
            double ut = scene.clip_time(target);
            std::string tname = wname + "_t" + std::to_string(rel_idx);
            std::string ft0_rel = "flows/" + tname + "_ft0.flo2";
            std::string ft1_rel = "flows/" + tname + "_ft1.flo2";
            std::string mask_rel = "masks/" + tname + ".png";
            if (!fs::exists(join(layout.root, ft0_rel))) {
                write_flo(join(layout.root, ft0_rel) + ".tmp",
                          scene.flow_between_times(ut, scene.clip_time(first)));
                atomic_rename(join(layout.root, ft0_rel) + ".tmp", join(layout.root, ft0_rel));
                write_flo(join(layout.root, ft1_rel) + ".tmp",
                          scene.flow_between_times(ut, scene.clip_time(last)));
                atomic_rename(join(layout.root, ft1_rel) + ".tmp", join(layout.root, ft1_rel));
                Tensor mask = scene.object_mask(ut);
                Tensor rgb({3, mask.dim(0), mask.dim(1)});
                for (int y = 0; y < mask.dim(0); ++y)
                    for (int x = 0; x < mask.dim(1); ++x)
                        for (int ch = 0; ch < 3; ++ch) rgb.at(ch, y, x) = mask.at(y, x);
                save_png(join(layout.root, mask_rel) + ".tmp.png", rgb);
                atomic_rename(join(layout.root, mask_rel) + ".tmp.png", join(layout.root, mask_rel));
            }
            m.target_flow_t0_paths.push_back(ft0_rel);
            m.target_flow_t1_paths.push_back(ft1_rel);
            m.target_mask_paths.push_back(mask_rel);
        }
        layout.samples.push_back(m);
        ++stats.n_samples;
    }
    return stats;
}

} // namespace evfi
