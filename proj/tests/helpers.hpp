// Builders for small hand-made datasets.
#pragma once

#include <string>
#include <vector>

#include "fewmeta/model.hpp"

namespace testutil {

inline fewmeta::SubgroupSplit split(std::string name, double y1, double se1, int n1, double y2, double se2, int n2) {
    fewmeta::SubgroupSplit s;
    s.name = std::move(name);
    s.arms[0] = fewmeta::SubgroupArm{1, "arm 1", y1, se1, n1};
    s.arms[1] = fewmeta::SubgroupArm{2, "arm 2", y2, se2, n2};
    return s;
}

/// Study row is the aggregate of the first split when splits are given.
inline fewmeta::StudyRecord study(std::string id, std::vector<fewmeta::SubgroupSplit> splits) {
    fewmeta::StudyRecord r;
    r.estimate = fewmeta::aggregate_study(splits.at(0), id);
    r.label = id;
    r.splits = std::move(splits);
    return r;
}

inline fewmeta::StudyRecord study(std::string id, double y, double se) {
    fewmeta::StudyRecord r;
    r.estimate = fewmeta::StudyEstimate{id, y, se, std::nullopt};
    r.label = id;
    return r;
}

/// k = 2 with one selected split per study.
inline fewmeta::MetaDataset two_studies(fewmeta::SubgroupSplit a, fewmeta::SubgroupSplit b) {
    return fewmeta::MetaDataset({study("A", {std::move(a)}), study("B", {std::move(b)})}).with_selection({0, 0});
}

inline std::string data_path(const std::string& file) { return std::string(FEWMETA_DATA_DIR) + "/" + file; }

}  // namespace testutil
