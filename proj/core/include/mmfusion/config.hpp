#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmfusion/data.hpp"
#include "mmfusion/fusion.hpp"
#include "mmfusion/training.hpp"

namespace mmf {

// Flat key=value configuration with a fixed schema. Unknown keys are a hard
// error; every key has a documented default. Precedence: defaults, then
// file, then command-line overrides.
class Config {
public:
    static Config defaults();
    static Config load(const std::optional<std::string>& path,
                       const std::vector<std::string>& overrides = {});

    void set(const std::string& key, const std::string& value); // validates

    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_real(const std::string& key) const;
    const std::string& get_string(const std::string& key) const;

    DatasetSpec dataset_spec() const;
    ModelConfig model_config() const;
    TrainConfig train_config() const;

    // Documented schema: key -> (type name, default) for help output.
    static std::vector<std::pair<std::string, std::string>> schema_help();

private:
    std::map<std::string, std::string> values_;
};

unsigned parse_augment_kinds(const std::string& spec); // "none" or comma list

} // namespace mmf
