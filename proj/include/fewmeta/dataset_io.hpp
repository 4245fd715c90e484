// Tabular and JSON ingestion of MetaDataset.
//
// CSV: UTF-8, header row, columns study_id,label,level,split,arm,y,se,n with
// an optional p_interaction column. level is "study" or "subgroup"; study rows
// leave split and arm empty, subgroup rows carry arm 1 or 2. n may be empty
// only on study rows. Column order is taken from the header.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fewmeta/model.hpp"

namespace fewmeta {

enum class RowLevel { Study, Subgroup };

struct RawRow {
    std::size_t line = 0;
    std::string study_id;
    std::string label;
    RowLevel level = RowLevel::Study;
    std::string split;
    std::optional<int> arm;
    double y = 0.0;
    double se = 0.0;
    std::optional<int> n;
    std::optional<double> p_interaction;
};

struct LoadOptions {
    /// Build a missing study row from the study's first split instead of
    /// rejecting its subgroup rows as orphans.
    bool derive_missing_study_rows = false;
};

std::vector<RawRow> parse_csv(std::istream& in);

MetaDataset validate_dataset(const std::vector<RawRow>& rows, const LoadOptions& options = {});

/// Reads .json (canonical interchange) or anything else as CSV.
MetaDataset load_dataset(const std::filesystem::path& path, const LoadOptions& options = {});

inline constexpr int kDatasetSchemaVersion = 1;

nlohmann::json dataset_to_json(const MetaDataset& ds);
MetaDataset dataset_from_json(const nlohmann::json& j);

}  // namespace fewmeta
