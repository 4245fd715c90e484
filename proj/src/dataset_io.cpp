#include "fewmeta/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace fewmeta {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

// Splits one CSV record; double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_record(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(trim(cur));
    return fields;
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
    throw ValidationError("line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& s, std::size_t line, const char* column) {
    if (s.empty()) fail(line, std::string("missing ") + column);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        fail(line, std::string("column ") + column + " is not a number: '" + s + "'");
    }
    if (used != s.size()) fail(line, std::string("column ") + column + " is not a number: '" + s + "'");
    return v;
}

int parse_int(const std::string& s, std::size_t line, const char* column) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        fail(line, std::string("column ") + column + " is not an integer: '" + s + "'");
    }
    return v;
}

}  // namespace

std::vector<RawRow> parse_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty CSV input");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

    const auto header = split_record(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* required : {"study_id", "label", "level", "split", "arm", "y", "se", "n"}) {
        if (!col.count(required)) throw ValidationError(std::string("CSV header lacks column ") + required);
    }
    const auto p_col = col.count("p_interaction") ? std::optional<std::size_t>(col["p_interaction"])
                                                  : std::nullopt;

    std::vector<RawRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto f = split_record(line);
        if (f.size() < header.size()) f.resize(header.size());
        if (f.size() > header.size()) fail(lineno, "too many fields");

        RawRow r;
        r.line = lineno;
        r.study_id = f[col["study_id"]];
        r.label = f[col["label"]];
        if (r.study_id.empty()) fail(lineno, "missing study_id");
        const auto& level = f[col["level"]];
        if (level == "study") {
            r.level = RowLevel::Study;
        } else if (level == "subgroup") {
            r.level = RowLevel::Subgroup;
        } else {
            fail(lineno, "level must be 'study' or 'subgroup', got '" + level + "'");
        }
        r.split = f[col["split"]];
        const auto& arm = f[col["arm"]];
        if (!arm.empty()) r.arm = parse_int(arm, lineno, "arm");
        r.y = parse_double(f[col["y"]], lineno, "y");
        r.se = parse_double(f[col["se"]], lineno, "se");
        const auto& n = f[col["n"]];
        if (!n.empty()) r.n = parse_int(n, lineno, "n");
        if (p_col && !f[*p_col].empty()) r.p_interaction = parse_double(f[*p_col], lineno, "p_interaction");

        if (r.level == RowLevel::Study) {
            if (!r.split.empty() || r.arm) fail(lineno, "study rows must leave split and arm empty");
        } else {
            if (r.split.empty()) fail(lineno, "subgroup row without split name");
            if (!r.arm || (*r.arm != 1 && *r.arm != 2)) fail(lineno, "subgroup arm must be 1 or 2");
            if (!r.n) fail(lineno, "subgroup rows require n");
        }
        if (!(r.se > 0.0)) fail(lineno, "non-positive se");
        if (r.n && *r.n < 1) fail(lineno, "n must be a positive integer");
        rows.push_back(std::move(r));
    }
    return rows;
}

MetaDataset validate_dataset(const std::vector<RawRow>& rows, const LoadOptions& options) {
    struct Pending {
        std::optional<RawRow> study_row;
        std::vector<std::string> split_order;
        std::map<std::string, std::array<std::optional<RawRow>, 2>> arms;
    };
    std::vector<std::string> order;
    std::map<std::string, Pending> by_id;

    for (const auto& r : rows) {
        auto [it, inserted] = by_id.try_emplace(r.study_id);
        if (inserted) order.push_back(r.study_id);
        auto& p = it->second;
        if (r.level == RowLevel::Study) {
            if (p.study_row) fail(r.line, "duplicate study row for " + r.study_id);
            p.study_row = r;
        } else {
            auto [sit, new_split] = p.arms.try_emplace(r.split);
            if (new_split) p.split_order.push_back(r.split);
            auto& slot = sit->second[static_cast<std::size_t>(*r.arm - 1)];
            if (slot) {
                fail(r.line, "duplicate (study, split, arm) key (" + r.study_id + ", " + r.split + ", " +
                                 std::to_string(*r.arm) + ")");
            }
            slot = r;
        }
    }

    std::vector<StudyRecord> studies;
    for (const auto& id : order) {
        auto& p = by_id[id];
        StudyRecord rec;
        for (const auto& name : p.split_order) {
            const auto& arms = p.arms[name];
            for (int j = 0; j < 2; ++j) {
                if (!arms[j]) {
                    throw ValidationError("study " + id + ", split " + name + ": arm " +
                                          std::to_string(j + 1) + " is missing");
                }
            }
            SubgroupSplit split;
            split.name = name;
            for (int j = 0; j < 2; ++j) {
                const auto& a = *arms[j];
                split.arms[j] = SubgroupArm{j + 1, a.label, a.y, a.se, *a.n};
                if (a.p_interaction) split.p_interaction = a.p_interaction;
            }
            rec.splits.push_back(std::move(split));
        }
        if (p.study_row) {
            const auto& r = *p.study_row;
            rec.estimate = StudyEstimate{id, r.y, r.se, r.n};
            rec.label = r.label;
        } else if (options.derive_missing_study_rows && !rec.splits.empty()) {
            rec.estimate = aggregate_study(rec.splits.front(), id);
            rec.label = id;
            rec.derived = true;
        } else {
            const auto& first = p.arms[p.split_order.front()];
            const auto line = first[0] ? first[0]->line : first[1]->line;
            fail(line, "orphan subgroup row: no study-level row for study_id " + id);
        }
        studies.push_back(std::move(rec));
    }
    MetaDataset ds(std::move(studies));
    require_analyzable(ds);
    return ds;
}

MetaDataset load_dataset(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    if (path.extension() == ".json") {
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("invalid JSON: ") + e.what());
        }
        auto ds = dataset_from_json(j);
        require_analyzable(ds);
        return ds;
    }
    return validate_dataset(parse_csv(in), options);
}

nlohmann::json dataset_to_json(const MetaDataset& ds) {
    nlohmann::json studies = nlohmann::json::array();
    for (const auto& s : ds.studies()) {
        nlohmann::json splits = nlohmann::json::array();
        for (const auto& split : s.splits) {
            nlohmann::json arms = nlohmann::json::array();
            for (const auto& a : split.arms) {
                arms.push_back({{"j", a.j}, {"label", a.label}, {"y", a.y}, {"se", a.se}, {"n", a.n}});
            }
            nlohmann::json js = {{"name", split.name}, {"arms", arms}};
            js["p_interaction"] = split.p_interaction ? nlohmann::json(*split.p_interaction) : nullptr;
            splits.push_back(std::move(js));
        }
        nlohmann::json js = {{"study_id", s.estimate.study_id}, {"label", s.label}, {"y", s.estimate.y},
                             {"se", s.estimate.se}, {"derived", s.derived}, {"splits", splits}};
        js["n"] = s.estimate.n ? nlohmann::json(*s.estimate.n) : nullptr;
        js["selected"] = s.selected ? nlohmann::json(s.splits[*s.selected].name) : nullptr;
        studies.push_back(std::move(js));
    }
    return {{"schema_version", kDatasetSchemaVersion}, {"studies", studies}};
}

MetaDataset dataset_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema_version").get<int>() != kDatasetSchemaVersion) {
            throw ValidationError("unsupported dataset schema_version");
        }
        std::vector<StudyRecord> studies;
        for (const auto& js : j.at("studies")) {
            StudyRecord rec;
            rec.estimate.study_id = js.at("study_id").get<std::string>();
            rec.estimate.y = js.at("y").get<double>();
            rec.estimate.se = js.at("se").get<double>();
            if (js.contains("n") && !js["n"].is_null()) rec.estimate.n = js["n"].get<int>();
            rec.label = js.value("label", rec.estimate.study_id);
            rec.derived = js.value("derived", false);
            for (const auto& jsplit : js.at("splits")) {
                SubgroupSplit split;
                split.name = jsplit.at("name").get<std::string>();
                const auto& arms = jsplit.at("arms");
                if (arms.size() != 2) throw ValidationError("split " + split.name + " needs exactly two arms");
                for (std::size_t a = 0; a < 2; ++a) {
                    split.arms[a] = SubgroupArm{arms[a].at("j").get<int>(), arms[a].value("label", ""),
                                                arms[a].at("y").get<double>(), arms[a].at("se").get<double>(),
                                                arms[a].at("n").get<int>()};
                }
                if (jsplit.contains("p_interaction") && !jsplit["p_interaction"].is_null()) {
                    split.p_interaction = jsplit["p_interaction"].get<double>();
                }
                rec.splits.push_back(std::move(split));
            }
            if (js.contains("selected") && !js["selected"].is_null()) {
                const auto name = js["selected"].get<std::string>();
                const auto it = std::find_if(rec.splits.begin(), rec.splits.end(),
                                             [&](const SubgroupSplit& s) { return s.name == name; });
                if (it == rec.splits.end()) {
                    throw ValidationError("study " + rec.estimate.study_id + ": selected split " + name +
                                          " does not exist");
                }
                rec.selected = static_cast<std::size_t>(it - rec.splits.begin());
            }
            studies.push_back(std::move(rec));
        }
        return MetaDataset(std::move(studies));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed dataset JSON: ") + e.what());
    }
}

}  // namespace fewmeta
