#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ditcache {

// Records a run: command, seed, effective config, content ids of inputs and
// outputs. Written last (atomically) so a run directory without an "ok"
// manifest is known-incomplete; failures leave a manifest with the error.
class RunManifest {
public:
    RunManifest(std::filesystem::path dir, std::string command, uint64_t seed,
                std::string effective_config);

    void add_input(const std::filesystem::path& path);

    // writes bytes atomically under the run dir and records the content id
    void write_output(const std::string& filename, const std::string& bytes);

    void finish_ok();
    void finish_failed(const std::string& error);

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path path_of(const std::string& filename) const { return dir_ / filename; }

private:
    struct Entry {
        std::string path;
        uint64_t bytes;
        std::string id;
    };
    void flush(const std::string& status, const std::string& error);

    std::filesystem::path dir_;
    std::string command_;
    uint64_t seed_;
    std::string config_;
    std::vector<Entry> inputs_;
    std::vector<Entry> outputs_;
};

}  // namespace ditcache
