#include "csg0/labelspace.hpp"

#include "csg0/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace csg0 {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

// Splits one CSV record; double-quoted fields may contain commas.
std::vector<std::string> split_csv(std::string_view line, std::size_t row) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (quoted) {
        throw ParseError("unterminated quoted field", row);
    }
    fields.push_back(trim(cur));
    return fields;
}

int parse_int(const std::string& s, std::size_t row, const char* column) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ParseError(std::string("invalid integer in column ") + column + ": '" + s + "'", row);
    }
    return value;
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c;
        if (c == '"') {
            out += '"';
        }
    }
    return out + "\"";
}

} // namespace

LabelRegistry LabelRegistry::from_csv(std::string_view text) {
    LabelRegistry reg;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t row = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) {
            continue;
        }
        auto fields = split_csv(line, row);
        if (!header_seen) {
            if (fields != std::vector<std::string>{"domain", "name", "orig_id", "cont_id"}) {
                throw ParseError("expected header 'domain,name,orig_id,cont_id'", row);
            }
            header_seen = true;
            continue;
        }
        if (fields.size() != 4) {
            throw ParseError("expected 4 columns, got " + std::to_string(fields.size()), row);
        }
        ClassDef def{fields[0], fields[1], parse_int(fields[2], row, "orig_id"), parse_int(fields[3], row, "cont_id")};
        if (def.domain.empty()) {
            throw ParseError("empty domain", row);
        }
        if (def.cont_id < 0) {
            throw ParseError("negative cont_id", row);
        }
        if (def.orig_id < -1) {
            throw ParseError("orig_id below -1", row);
        }
        if (reg.domains_.empty() || reg.domains_.back() != def.domain) {
            if (std::find(reg.domains_.begin(), reg.domains_.end(), def.domain) != reg.domains_.end()) {
                throw ParseError("rows of domain '" + def.domain + "' are not contiguous", row);
            }
            reg.domains_.push_back(def.domain);
        }
        if (def.orig_id >= 0) {
            const auto key = std::make_pair(def.domain, def.orig_id);
            const auto it = reg.by_orig_.find(key);
            if (it != reg.by_orig_.end() && it->second != def.cont_id) {
                throw ParseError("conflicting cont_id for (" + def.domain + ", " + std::to_string(def.orig_id) +
                                     "): " + std::to_string(it->second) + " vs " + std::to_string(def.cont_id),
                                 row);
            }
            reg.by_orig_.emplace(key, def.cont_id);
        }
        reg.defs_.push_back(std::move(def));
    }
    if (!header_seen) {
        throw ParseError("empty mapping table", row);
    }
    if (reg.defs_.empty()) {
        throw ValidationError("mapping table has no rows");
    }

    // Per-step accounting: a step's new ids are those never seen before,
    // and they must extend the id range without gaps.
    std::set<int> seen;
    std::size_t known = 0;
    for (const auto& domain : reg.domains_) {
        std::set<int> fresh;
        for (const auto& d : reg.defs_) {
            if (d.domain == domain && !seen.contains(d.cont_id)) {
                fresh.insert(d.cont_id);
            }
        }
        StepInfo info;
        info.domain = domain;
        info.old_count = known;
        info.new_count = fresh.size();
        info.first_new_id = static_cast<int>(known);
        int expect = static_cast<int>(known);
        for (int id : fresh) {
            if (id != expect) {
                throw ValidationError("continual ids of domain '" + domain + "' leave a gap: expected " +
                                      std::to_string(expect) + ", found " + std::to_string(id));
            }
            ++expect;
        }
        seen.insert(fresh.begin(), fresh.end());
        known += fresh.size();
        reg.steps_.push_back(info);
    }
    reg.introduced_at_.assign(known, 0);
    for (std::size_t k = 0; k < reg.steps_.size(); ++k) {
        const auto& s = reg.steps_[k];
        for (std::size_t i = 0; i < s.new_count; ++i) {
            reg.introduced_at_[static_cast<std::size_t>(s.first_new_id) + i] = k;
        }
    }
    return reg;
}

LabelRegistry LabelRegistry::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open mapping file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_csv(ss.str());
}

std::string LabelRegistry::to_csv() const {
    std::ostringstream os;
    os << "domain,name,orig_id,cont_id\n";
    for (const auto& d : defs_) {
        os << quote_if_needed(d.domain) << ',' << quote_if_needed(d.name) << ',' << d.orig_id << ',' << d.cont_id
           << '\n';
    }
    return os.str();
}

const StepInfo& LabelRegistry::step(std::size_t k) const {
    if (k >= steps_.size()) {
        throw LookupError("step " + std::to_string(k) + " not in registry (" + std::to_string(steps_.size()) +
                          " steps)");
    }
    return steps_[k];
}

std::size_t LabelRegistry::step_of(std::string_view domain) const {
    const auto it = std::find(domains_.begin(), domains_.end(), domain);
    if (it == domains_.end()) {
        throw LookupError("unknown domain '" + std::string(domain) + "'");
    }
    return static_cast<std::size_t>(it - domains_.begin());
}

bool LabelRegistry::has_domain(std::string_view domain) const {
    return std::find(domains_.begin(), domains_.end(), domain) != domains_.end();
}

int LabelRegistry::remap(std::string_view domain, int orig_id) const {
    const auto it = by_orig_.find(std::make_pair(std::string(domain), orig_id));
    if (orig_id < 0 || it == by_orig_.end()) {
        throw LookupError("no mapping for (" + std::string(domain) + ", " + std::to_string(orig_id) + ")");
    }
    return it->second;
}

int LabelRegistry::remap_name(std::string_view domain, std::string_view name) const {
    for (const auto& d : defs_) {
        if (d.domain == domain && d.name == name) {
            return d.cont_id;
        }
    }
    throw LookupError("no class '" + std::string(name) + "' in domain '" + std::string(domain) + "'");
}

std::size_t LabelRegistry::step_introduced(int cont_id) const {
    if (cont_id < 0 || static_cast<std::size_t>(cont_id) >= introduced_at_.size()) {
        throw LookupError("continual id " + std::to_string(cont_id) + " is not registered");
    }
    return introduced_at_[static_cast<std::size_t>(cont_id)];
}

bool LabelRegistry::registered(std::string_view domain, int cont_id) const {
    return std::any_of(defs_.begin(), defs_.end(),
                       [&](const ClassDef& d) { return d.domain == domain && d.cont_id == cont_id; });
}

std::vector<int> LabelRegistry::sampleable_ids(std::string_view domain) const {
    std::set<int> ids;
    for (const auto& d : defs_) {
        if (d.domain == domain && d.orig_id >= 0) {
            ids.insert(d.cont_id);
        }
    }
    return {ids.begin(), ids.end()};
}

SemanticMap resize_nearest(const SemanticMap& map, std::size_t height, std::size_t width) {
    if (map.height == height && map.width == width) {
        return map;
    }
    SemanticMap out(height, width);
    for (std::size_t i = 0; i < height; ++i) {
        const std::size_t si = i * map.height / height;
        for (std::size_t j = 0; j < width; ++j) {
            out.at(i, j) = map.at(si, j * map.width / width);
        }
    }
    return out;
}

void validate_map(const SemanticMap& map, const LabelRegistry& registry, std::string_view domain) {
    if (map.labels.size() != map.height * map.width) {
        throw ValidationError("semantic map storage does not match its size");
    }
    const std::size_t step = registry.step_of(domain);
    std::set<int> checked;
    for (int id : map.labels) {
        if (!checked.insert(id).second) {
            continue;
        }
        if (id < 0 || static_cast<std::size_t>(id) >= registry.total_classes() ||
            registry.step_introduced(id) > step) {
            throw ValidationError("label " + std::to_string(id) + " is not available at domain '" +
                                  std::string(domain) + "'");
        }
    }
}

OneHotSplit encode_split(const SemanticMap& map, const LabelRegistry& registry, std::size_t step) {
    if (step == 0) {
        throw ValidationError("encode_split needs a continual step (>= 1)");
    }
    const auto& info = registry.step(step);
    const std::size_t c_old = info.old_count;
    const std::size_t c_new = info.new_count;
    const std::size_t plane = map.height * map.width;
    const Shape spatial{map.height, map.width};
    std::vector<double> old_v(c_old * plane, 0.0);
    std::vector<double> new_v(c_new * plane, 0.0);
    std::vector<double> mask_v(plane, 0.0);
    for (std::size_t p = 0; p < plane; ++p) {
        const int id = map.labels[p];
        if (id < 0 || static_cast<std::size_t>(id) >= info.total()) {
            throw ValidationError("label " + std::to_string(id) + " is from a later step than " + std::to_string(step));
        }
        const auto c = static_cast<std::size_t>(id);
        if (c < c_old) {
            old_v[c * plane + p] = 1.0;
        } else {
            new_v[(c - c_old) * plane + p] = 1.0;
            mask_v[p] = 1.0;
        }
    }
    OneHotSplit split;
    split.old_classes = Tensor::from_data({1, c_old, map.height, map.width}, std::move(old_v));
    split.new_classes = Tensor::from_data({1, c_new, map.height, map.width}, std::move(new_v));
    split.new_mask = Tensor::from_data({1, 1, map.height, map.width}, std::move(mask_v));
    return split;
}

std::vector<LabelGroup> encode_groups(std::span<const SemanticMap> maps, const LabelRegistry& registry,
                                      std::size_t step, std::size_t height, std::size_t width) {
    const std::size_t batch = maps.size();
    const std::size_t plane = height * width;
    const std::size_t limit = registry.class_count(step);
    std::vector<LabelGroup> groups;
    std::vector<std::vector<double>> onehots;
    std::vector<std::vector<double>> masks;
    std::vector<std::size_t> counts;
    for (std::size_t g = 0; g <= step; ++g) {
        const auto& s = registry.step(g);
        onehots.emplace_back(batch * s.new_count * plane, 0.0);
        masks.emplace_back(batch * plane, 0.0);
        counts.push_back(0);
    }
    for (std::size_t n = 0; n < batch; ++n) {
        const SemanticMap small = resize_nearest(maps[n], height, width);
        for (std::size_t p = 0; p < plane; ++p) {
            const int id = small.labels[p];
            if (id < 0 || static_cast<std::size_t>(id) >= limit) {
                throw ValidationError("label " + std::to_string(id) + " is not available at step " +
                                      std::to_string(step));
            }
            const std::size_t g = registry.step_introduced(id);
            const auto& s = registry.step(g);
            const auto c = static_cast<std::size_t>(id - s.first_new_id);
            onehots[g][(n * s.new_count + c) * plane + p] = 1.0;
            masks[g][n * plane + p] = 1.0;
            ++counts[g];
        }
    }
    for (std::size_t g = 0; g <= step; ++g) {
        const auto& s = registry.step(g);
        LabelGroup grp;
        grp.onehot = Tensor::from_data({batch, s.new_count, height, width}, std::move(onehots[g]));
        grp.mask = Tensor::from_data({batch, 1, height, width}, std::move(masks[g]));
        grp.any = counts[g] > 0;
        grp.all = counts[g] == batch * plane;
        groups.push_back(std::move(grp));
    }
    return groups;
}

Tensor encode_onehot(std::span<const SemanticMap> maps, std::size_t classes) {
    if (maps.empty()) {
        throw ValidationError("encode_onehot: no maps");
    }
    const std::size_t h = maps[0].height;
    const std::size_t w = maps[0].width;
    const std::size_t plane = h * w;
    std::vector<double> v(maps.size() * classes * plane, 0.0);
    for (std::size_t n = 0; n < maps.size(); ++n) {
        if (maps[n].height != h || maps[n].width != w) {
            throw ValidationError("encode_onehot: maps differ in size");
        }
        for (std::size_t p = 0; p < plane; ++p) {
            const int id = maps[n].labels[p];
            if (id < 0 || static_cast<std::size_t>(id) >= classes) {
                throw ValidationError("label " + std::to_string(id) + " outside " + std::to_string(classes) +
                                      " classes");
            }
            v[(n * classes + static_cast<std::size_t>(id)) * plane + p] = 1.0;
        }
    }
    return Tensor::from_data({maps.size(), classes, h, w}, std::move(v));
}

std::vector<double> class_frequencies(std::span<const SemanticMap> dataset, std::size_t classes) {
    if (dataset.empty()) {
        throw ValidationError("class_frequencies: empty dataset");
    }
    std::vector<std::size_t> counts(classes, 0);
    std::size_t total = 0;
    for (const auto& map : dataset) {
        for (int id : map.labels) {
            if (id < 0 || static_cast<std::size_t>(id) >= classes) {
                throw ValidationError("label " + std::to_string(id) + " outside " + std::to_string(classes) +
                                      " classes");
            }
            ++counts[static_cast<std::size_t>(id)];
            ++total;
        }
    }
    std::vector<double> alpha(classes, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
        if (counts[c] > 0) {
            alpha[c] = static_cast<double>(total) / (static_cast<double>(classes) * static_cast<double>(counts[c]));
        }
    }
    return alpha;
}

} // namespace csg0
