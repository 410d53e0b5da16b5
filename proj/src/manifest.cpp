#include "ditcache/manifest.hpp"

#include <json.hpp>

#include "ditcache/util.hpp"

namespace ditcache {

RunManifest::RunManifest(std::filesystem::path dir, std::string command, uint64_t seed,
                         std::string effective_config)
    : dir_(std::move(dir)), command_(std::move(command)), seed_(seed),
      config_(std::move(effective_config)) {
    std::filesystem::create_directories(dir_);
    // the effective config is itself an output, written up front
    write_output("effective.cfg", config_);
}

void RunManifest::add_input(const std::filesystem::path& path) {
    std::string bytes = read_file(path);
    inputs_.push_back({path.string(), bytes.size(), content_id(bytes)});
}

void RunManifest::write_output(const std::string& filename, const std::string& bytes) {
    write_file_atomic(dir_ / filename, bytes);
    for (auto& e : outputs_)
        if (e.path == filename) {
            e.bytes = bytes.size();
            e.id = content_id(bytes);
            return;
        }
    outputs_.push_back({filename, bytes.size(), content_id(bytes)});
}

void RunManifest::finish_ok() { flush("ok", ""); }

void RunManifest::finish_failed(const std::string& error) { flush("failed", error); }

void RunManifest::flush(const std::string& status, const std::string& error) {
    nlohmann::json j;
    j["command"] = command_;
    j["status"] = status;
    if (!error.empty())
        j["error"] = error;
    j["seed"] = seed_;
    j["config"] = config_;
    auto entries = [](const std::vector<Entry>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& e : v)
            arr.push_back({{"path", e.path}, {"bytes", e.bytes}, {"content_id", e.id}});
        return arr;
    };
    j["inputs"] = entries(inputs_);
    j["outputs"] = entries(outputs_);
    write_file_atomic(dir_ / "manifest.json", j.dump(2) + "\n");
}

}  // namespace ditcache
