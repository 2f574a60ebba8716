#include "mgp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "mgp/error.hpp"

namespace mgp {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

// Splits one CSV record; double quotes may wrap a field containing commas.
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                current += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                current += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(trim(current));
            current.clear();
        } else {
            current += c;
        }
    }
    fields.push_back(trim(current));
    return fields;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

double level_index(ColumnSpec& spec, const std::string& value, std::size_t line, bool allow_grow) {
    const auto it = std::find(spec.levels.begin(), spec.levels.end(), value);
    if (it != spec.levels.end()) return static_cast<double>(it - spec.levels.begin());
    if (!allow_grow) {
        throw ParseError("line " + std::to_string(line) + ", column '" + spec.name + "': unknown level '" + value +
                         "'");
    }
    spec.levels.push_back(value);
    return static_cast<double>(spec.levels.size() - 1);
}

void check_value(const ColumnSpec& spec, double v, std::size_t row) {
    if (spec.kind == ColumnKind::categorical) {
        const double idx = std::floor(v);
        if (idx != v || v < 0 || static_cast<std::size_t>(v) >= spec.levels.size()) {
            throw ValidationError("row " + std::to_string(row) + ", column '" + spec.name +
                                  "': value is not a member of the level set");
        }
    } else if (!std::isfinite(v)) {
        throw ValidationError("row " + std::to_string(row) + ", column '" + spec.name + "': non-finite value");
    }
}

// Level names in order of first appearance in the data, then unseen schema levels.
std::vector<std::string> appearance_order(const ColumnSpec& spec, std::span<const double> codes) {
    std::vector<bool> seen(spec.levels.size(), false);
    std::vector<std::string> order;
    for (const double c : codes) {
        const auto idx = static_cast<std::size_t>(c);
        if (!seen[idx]) {
            seen[idx] = true;
            order.push_back(spec.levels[idx]);
        }
    }
    for (std::size_t i = 0; i < spec.levels.size(); ++i) {
        if (!seen[i]) order.push_back(spec.levels[i]);
    }
    return order;
}

ColumnTransform fit_column(const ColumnSpec& spec, std::span<const double> values) {
    ColumnTransform t;
    t.kind = spec.kind;
    if (spec.kind == ColumnKind::categorical) {
        t.levels = appearance_order(spec, values);
        return t;
    }
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (const double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / n);
    if (!(sd > 0.0)) throw ValidationError("column '" + spec.name + "' has zero population variance");
    t.mean = mean;
    t.sd = sd;
    return t;
}

// Maps schema level index -> encoding position for one categorical column.
std::vector<std::size_t> level_map(const ColumnSpec& spec, const ColumnTransform& t) {
    std::vector<std::size_t> map(spec.levels.size());
    for (std::size_t i = 0; i < spec.levels.size(); ++i) {
        const auto it = std::find(t.levels.begin(), t.levels.end(), spec.levels[i]);
        if (it == t.levels.end()) {
            throw ValidationError("column '" + spec.name + "': level '" + spec.levels[i] +
                                  "' was not seen when fitting the encoding");
        }
        map[i] = static_cast<std::size_t>(it - t.levels.begin());
    }
    return map;
}

}  // namespace

Dataset::Dataset(Schema schema, std::vector<double> features, std::vector<double> response)
    : schema_(std::move(schema)), features_(std::move(features)), response_(std::move(response)) {
    if (response_.empty()) throw ValidationError("dataset must contain at least one row");
    if (features_.size() != response_.size() * schema_.features.size()) {
        throw ValidationError("feature storage does not match rows x schema columns");
    }
    for (std::size_t i = 0; i < size(); ++i) {
        for (std::size_t j = 0; j < num_features(); ++j) check_value(schema_.features[j], feature(i, j), i);
        check_value(schema_.response, response_[i], i);
    }
}

std::size_t Dataset::num_classes() const noexcept {
    return categorical_response() ? schema_.response.levels.size() : 0;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    std::vector<double> f;
    std::vector<double> r;
    f.reserve(rows.size() * num_features());
    r.reserve(rows.size());
    for (const std::size_t i : rows) {
        const auto src = row(i);
        f.insert(f.end(), src.begin(), src.end());
        r.push_back(response_[i]);
    }
    return Dataset(schema_, std::move(f), std::move(r));
}

std::size_t Dataset::column_index(const std::string& name) const {
    for (std::size_t j = 0; j < num_features(); ++j) {
        if (schema_.features[j].name == name) return j;
    }
    if (schema_.response.name == name) return num_features();
    throw ValidationError("unknown column '" + name + "'");
}

Dataset load_csv(const std::filesystem::path& path, const Schema& declared) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line)) throw ParseError("'" + path.string() + "' is empty");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const std::vector<std::string> header = split_csv_line(line);

    Schema schema = declared;
    auto locate = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ParseError("header of '" + path.string() + "' lacks column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    std::vector<std::size_t> feature_pos;
    for (const auto& c : schema.features) feature_pos.push_back(locate(c.name));
    const std::size_t response_pos = locate(schema.response.name);

    std::vector<double> features;
    std::vector<double> response;
    std::size_t line_no = 1;
    auto parse_cell = [&](ColumnSpec& spec, const std::string& cell) {
        if (cell.empty()) {
            throw ParseError("line " + std::to_string(line_no) + ", column '" + spec.name + "': missing value");
        }
        if (spec.kind == ColumnKind::categorical) return level_index(spec, cell, line_no, spec.infer_levels);
        double v = 0.0;
        if (!parse_double(cell, v)) {
            throw ParseError("line " + std::to_string(line_no) + ", column '" + spec.name +
                             "': cannot parse '" + cell + "' as a number");
        }
        return v;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                             " fields, found " + std::to_string(cells.size()));
        }
        for (std::size_t j = 0; j < schema.features.size(); ++j) {
            features.push_back(parse_cell(schema.features[j], cells[feature_pos[j]]));
        }
        response.push_back(parse_cell(schema.response, cells[response_pos]));
    }
    if (response.empty()) throw ParseError("'" + path.string() + "' has no data rows");
    return Dataset(std::move(schema), std::move(features), std::move(response));
}

StandardizationParams fit_standardization(const Dataset& population) {
    StandardizationParams params;
    std::vector<double> column(population.size());
    for (std::size_t j = 0; j < population.num_features(); ++j) {
        for (std::size_t i = 0; i < population.size(); ++i) column[i] = population.feature(i, j);
        params.features.push_back(fit_column(population.schema().features[j], column));
    }
    params.response = fit_column(population.schema().response, population.responses());
    return params;
}

DesignMatrix encode(const Dataset& dataset, const StandardizationParams& params) {
    const Schema& schema = dataset.schema();
    if (params.features.size() != schema.features.size()) {
        throw ValidationError("standardization parameters do not match the dataset schema");
    }

    DesignMatrix design;
    design.column_names.push_back("intercept");
    std::vector<std::vector<std::size_t>> maps(schema.features.size());
    for (std::size_t j = 0; j < schema.features.size(); ++j) {
        const auto& spec = schema.features[j];
        const auto& t = params.features[j];
        if (spec.kind != t.kind) throw ValidationError("column '" + spec.name + "' changed kind");
        if (spec.kind == ColumnKind::continuous) {
            design.column_names.push_back(spec.name);
        } else {
            maps[j] = level_map(spec, t);
            for (std::size_t l = 1; l < t.levels.size(); ++l) design.column_names.push_back(spec.name + "=" + t.levels[l]);
        }
    }

    const auto n = static_cast<Eigen::Index>(dataset.size());
    design.x = RowMatrix::Zero(n, static_cast<Eigen::Index>(design.column_names.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        design.x(i, 0) = 1.0;
        Eigen::Index col = 1;
        for (std::size_t j = 0; j < schema.features.size(); ++j) {
            const auto& t = params.features[j];
            const double v = dataset.feature(static_cast<std::size_t>(i), j);
            if (t.kind == ColumnKind::continuous) {
                design.x(i, col++) = (v - t.mean) / t.sd;
            } else {
                const std::size_t pos = maps[j][static_cast<std::size_t>(v)];
                if (pos > 0) design.x(i, col + static_cast<Eigen::Index>(pos) - 1) = 1.0;
                col += static_cast<Eigen::Index>(t.levels.size()) - 1;
            }
        }
    }

    design.y.resize(n);
    const auto& rt = params.response;
    if (schema.response.kind != rt.kind) throw ValidationError("response changed kind");
    if (rt.kind == ColumnKind::continuous) {
        for (Eigen::Index i = 0; i < n; ++i) design.y(i) = (dataset.response(static_cast<std::size_t>(i)) - rt.mean) / rt.sd;
    } else {
        const auto map = level_map(schema.response, rt);
        for (Eigen::Index i = 0; i < n; ++i) {
            design.y(i) = static_cast<double>(map[static_cast<std::size_t>(dataset.response(static_cast<std::size_t>(i)))]);
        }
        design.num_classes = rt.levels.size();
    }
    if (!design.x.allFinite() || !design.y.allFinite()) throw ValidationError("encoded design has non-finite entries");
    return design;
}

std::vector<std::size_t> quantile_bins(std::span<const double> values, std::size_t bins) {
    if (bins == 0) throw ValidationError("quantile binning needs at least one bin");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    std::vector<double> bounds;
    for (std::size_t k = 1; k < bins; ++k) {
        const std::size_t rank = (k * n + bins - 1) / bins;  // ceil(k n / bins), 1-based
        bounds.push_back(sorted[std::max<std::size_t>(rank, 1) - 1]);
    }
    std::vector<std::size_t> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = static_cast<std::size_t>(std::lower_bound(bounds.begin(), bounds.end(), values[i]) - bounds.begin());
    }
    return out;
}

Dataset stratified_split(const Dataset& dataset, std::size_t n_train, const std::vector<StratumSpec>& strata,
                         RngStream& rng) {
    const std::size_t n = dataset.size();
    if (n_train == 0 || n_train > n) {
        throw ValidationError("split size " + std::to_string(n_train) + " must lie in [1, " + std::to_string(n) + "]");
    }

    // Stratum key per row: one code per stratification column.
    std::vector<std::vector<double>> keys(n);
    for (const auto& s : strata) {
        const std::size_t col = dataset.column_index(s.column);
        std::vector<double> values(n);
        for (std::size_t i = 0; i < n; ++i) {
            values[i] = col == dataset.num_features() ? dataset.response(i) : dataset.feature(i, col);
        }
        if (s.bins > 0) {
            const auto b = quantile_bins(values, s.bins);
            for (std::size_t i = 0; i < n; ++i) keys[i].push_back(static_cast<double>(b[i]));
        } else {
            for (std::size_t i = 0; i < n; ++i) keys[i].push_back(values[i]);
        }
    }
    std::map<std::vector<double>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[keys[i]].push_back(i);

    // Largest-remainder allocation; ties broken by stratum order.
    struct Alloc {
        std::vector<std::size_t>* rows;
        std::size_t take;
        double remainder;
        std::size_t order;
    };
    std::vector<Alloc> alloc;
    std::size_t assigned = 0;
    for (auto& [key, rows] : groups) {
        const double exact = static_cast<double>(n_train) * static_cast<double>(rows.size()) / static_cast<double>(n);
        const auto take = static_cast<std::size_t>(std::floor(exact));
        alloc.push_back({&rows, take, exact - static_cast<double>(take), alloc.size()});
        assigned += take;
    }
    std::vector<std::size_t> by_remainder(alloc.size());
    std::iota(by_remainder.begin(), by_remainder.end(), 0);
    std::stable_sort(by_remainder.begin(), by_remainder.end(),
                     [&](std::size_t a, std::size_t b) { return alloc[a].remainder > alloc[b].remainder; });
    for (std::size_t k = 0; assigned < n_train; ++k, ++assigned) alloc[by_remainder[k % alloc.size()]].take += 1;

    std::vector<std::size_t> chosen;
    chosen.reserve(n_train);
    for (auto& a : alloc) {
        auto& rows = *a.rows;
        if (a.take > rows.size()) {
            throw ValidationError("stratum with " + std::to_string(rows.size()) + " rows cannot supply " +
                                  std::to_string(a.take));
        }
        // Partial Fisher-Yates.
        for (std::size_t k = 0; k < a.take; ++k) {
            const std::size_t pick = k + static_cast<std::size_t>(rng.index(rows.size() - k));
            std::swap(rows[k], rows[pick]);
            chosen.push_back(rows[k]);
        }
    }
    std::sort(chosen.begin(), chosen.end());
    return dataset.subset(chosen);
}

}  // namespace mgp
