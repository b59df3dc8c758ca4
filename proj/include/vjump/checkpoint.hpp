#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vjump/regression.hpp"
#include "vjump/tcn.hpp"

namespace vjump {

inline constexpr std::string_view kCheckpointMagic = "VJMPCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Generic container: magic, format version, kind tag, JSON config echo, named float64 arrays.
struct Checkpoint {
    std::string kind;  // "mstcn", "rf", "gbt" or "mlp"
    std::string config_json;
    std::map<std::string, std::vector<double>> arrays;

    const std::vector<double>& array(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, unknown version, truncation or trailing bytes.
Checkpoint deserialize_checkpoint(std::string_view bytes);

Checkpoint to_checkpoint(const ModelWeights& weights);
Checkpoint to_checkpoint(const TrainedRegressor& model);
ModelWeights mstcn_from_checkpoint(const Checkpoint& ckpt);
TrainedRegressor regressor_from_checkpoint(const Checkpoint& ckpt);

void save_checkpoint(const ModelWeights& weights, const std::filesystem::path& path);
void save_checkpoint(const TrainedRegressor& model, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);
ModelWeights load_mstcn_checkpoint(const std::filesystem::path& path);
TrainedRegressor load_regressor_checkpoint(const std::filesystem::path& path);

}  // namespace vjump
