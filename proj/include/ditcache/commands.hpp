#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "ditcache/config.hpp"

namespace ditcache {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitNumericError = 3;

int cmd_pretrain(const RunConfig& cfg);

int cmd_train_router(const RunConfig& cfg, const std::filesystem::path& teacher);

int cmd_sample(const RunConfig& cfg, const std::filesystem::path& teacher,
               const std::optional<std::filesystem::path>& router);

int cmd_eval(const RunConfig& cfg, const std::filesystem::path& teacher,
             const std::vector<std::filesystem::path>& routers);

int cmd_proxy_trace(const RunConfig& cfg, const std::filesystem::path& teacher,
                    const std::filesystem::path& router);

}  // namespace ditcache
