#include "lesionkit/catalog.hpp"

#include "lesionkit/csv.hpp"
#include "lesionkit/error.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace lesionkit::catalog {

namespace {

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<Source, 6> kSourceNames{{
    {Source::isic_challenge, "isic_challenge"},
    {Source::isic_archive, "isic_archive"},
    {Source::atlas, "atlas"},
    {Source::dermofit, "dermofit"},
    {Source::irma, "irma"},
    {Source::ph2, "ph2"},
}};
constexpr NameTable<Diagnosis, 5> kDiagnosisNames{{
    {Diagnosis::melanoma, "melanoma"},
    {Diagnosis::seborrheic_keratosis, "seborrheic_keratosis"},
    {Diagnosis::nevus, "nevus"},
    {Diagnosis::other, "other"},
    {Diagnosis::unknown, "unknown"},
}};
constexpr NameTable<Verification, 4> kVerificationNames{{
    {Verification::unknown_followup, "unknown_followup"},
    {Verification::no_followup, "no_followup"},
    {Verification::followup, "followup"},
    {Verification::histopathology, "histopathology"},
}};
constexpr NameTable<Difficulty, 4> kDifficultyNames{{
    {Difficulty::easy, "easy"},
    {Difficulty::moderate, "moderate"},
    {Difficulty::difficult, "difficult"},
    {Difficulty::unknown, "unknown"},
}};
constexpr NameTable<Sex, 2> kSexNames{{{Sex::m, "m"}, {Sex::f, "f"}}};
constexpr NameTable<Field, 8> kFieldNames{{
    {Field::image_id, "image_id"},
    {Field::source, "source"},
    {Field::diagnosis, "diagnosis"},
    {Field::verification, "verification"},
    {Field::difficulty, "difficulty"},
    {Field::age, "age"},
    {Field::sex, "sex"},
    {Field::path, "path"},
}};
constexpr NameTable<CompareOp, 6> kOpNames{{
    {CompareOp::eq, "=="},
    {CompareOp::ne, "!="},
    {CompareOp::lt, "<"},
    {CompareOp::le, "<="},
    {CompareOp::gt, ">"},
    {CompareOp::ge, ">="},
}};
constexpr NameTable<WeightKind, 4> kWeightKindNames{{
    {WeightKind::uniform, "uniform"},
    {WeightKind::class_inverse, "class_inverse"},
    {WeightKind::verification_tier, "verification_tier"},
    {WeightKind::combined, "combined"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const NameTable<E, N>& table, E value) {
    for (const auto& [e, name] : table) {
        if (e == value) return name;
    }
    return "?";
}

template <typename E, std::size_t N>
std::optional<E> value_of(const NameTable<E, N>& table, std::string_view name) {
    for (const auto& [e, n] : table) {
        if (n == name) return e;
    }
    return std::nullopt;
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string field_text(const ImageRecord& r, Field f) {
    switch (f) {
    case Field::image_id: return r.image_id;
    case Field::source: return std::string(to_string(r.source));
    case Field::diagnosis: return std::string(to_string(r.diagnosis));
    case Field::verification: return std::string(to_string(r.verification));
    case Field::difficulty: return std::string(to_string(r.difficulty));
    case Field::age: return r.age ? std::to_string(*r.age) : std::string();
    case Field::sex: return r.sex ? std::string(to_string(*r.sex)) : std::string();
    case Field::path: return r.path;
    }
    return {};
}

bool compare_int(long long lhs, CompareOp op, long long rhs) {
    switch (op) {
    case CompareOp::eq: return lhs == rhs;
    case CompareOp::ne: return lhs != rhs;
    case CompareOp::lt: return lhs < rhs;
    case CompareOp::le: return lhs <= rhs;
    case CompareOp::gt: return lhs > rhs;
    case CompareOp::ge: return lhs >= rhs;
    }
    return false;
}

}  // namespace

std::string_view to_string(Source v) { return name_of(kSourceNames, v); }
std::string_view to_string(Diagnosis v) { return name_of(kDiagnosisNames, v); }
std::string_view to_string(Verification v) { return name_of(kVerificationNames, v); }
std::string_view to_string(Difficulty v) { return name_of(kDifficultyNames, v); }
std::string_view to_string(Sex v) { return name_of(kSexNames, v); }
std::string_view to_string(Field f) { return name_of(kFieldNames, f); }
std::string_view to_string(CompareOp op) { return name_of(kOpNames, op); }
std::string_view to_string(WeightKind k) { return name_of(kWeightKindNames, k); }

std::optional<Source> parse_source(std::string_view s) { return value_of(kSourceNames, s); }
std::optional<Diagnosis> parse_diagnosis(std::string_view s) { return value_of(kDiagnosisNames, s); }
std::optional<Verification> parse_verification(std::string_view s) { return value_of(kVerificationNames, s); }
std::optional<Difficulty> parse_difficulty(std::string_view s) { return value_of(kDifficultyNames, s); }
std::optional<Sex> parse_sex(std::string_view s) { return value_of(kSexNames, s); }
std::optional<Field> parse_field(std::string_view s) { return value_of(kFieldNames, s); }
std::optional<WeightKind> parse_weight_kind(std::string_view s) { return value_of(kWeightKindNames, s); }

// ---------------------------------------------------------------------------

ManifestParse parse_manifest(std::string_view csv_text) {
    const auto table = csv::Table::parse(csv_text);
    table.require_columns({kManifestColumns.begin(), kManifestColumns.end()});

    const auto c_id = table.column("image_id");
    const auto c_source = table.column("source");
    const auto c_diag = table.column("diagnosis");
    const auto c_ver = table.column("verification");
    const auto c_diff = table.column("difficulty");
    const auto c_age = table.column("age");
    const auto c_sex = table.column("sex");
    const auto c_path = table.column("path");

    ManifestParse out;
    out.records.reserve(table.size());
    std::unordered_set<std::string> seen;

    auto warn = [&](std::size_t row, std::string_view column, std::string_view value) {
        ++out.warnings;
        out.warning_messages.push_back("row " + std::to_string(row) + ": unrecognized " +
                                       std::string(column) + " '" + std::string(value) + "'");
    };

    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& row = table.rows()[i];
        const std::size_t row_no = i + 1;
        ImageRecord r;
        r.image_id = std::string(trim(row[c_id]));
        if (r.image_id.empty()) throw ParseError("manifest row " + std::to_string(row_no) + ": empty image_id");
        if (!seen.insert(r.image_id).second) {
            throw ParseError("manifest: duplicate image_id '" + r.image_id + "'");
        }

        const auto source_text = trim(row[c_source]);
        const auto source = parse_source(source_text);
        if (!source) {
            throw ParseError("manifest row " + std::to_string(row_no) + ": unknown source '" +
                             std::string(source_text) + "'");
        }
        r.source = *source;

        const auto diag_text = trim(row[c_diag]);
        if (auto d = parse_diagnosis(diag_text)) {
            r.diagnosis = *d;
        } else {
            if (!diag_text.empty()) warn(row_no, "diagnosis", diag_text);
            r.diagnosis = Diagnosis::unknown;
        }

        const auto ver_text = trim(row[c_ver]);
        if (auto v = parse_verification(ver_text)) {
            r.verification = *v;
        } else {
            if (!ver_text.empty()) warn(row_no, "verification", ver_text);
            r.verification = Verification::unknown_followup;
        }

        const auto diff_text = trim(row[c_diff]);
        if (auto d = parse_difficulty(diff_text)) {
            r.difficulty = *d;
        } else {
            if (!diff_text.empty()) warn(row_no, "difficulty", diff_text);
            r.difficulty = Difficulty::unknown;
        }

        const auto age_text = trim(row[c_age]);
        if (!age_text.empty()) {
            try {
                const auto age = csv::parse_integer(age_text, "age");
                if (age >= 0 && age <= kMaxAge) {
                    r.age = static_cast<int>(age);
                } else {
                    warn(row_no, "age", age_text);
                }
            } catch (const ParseError&) {
                warn(row_no, "age", age_text);
            }
        }

        const auto sex_text = trim(row[c_sex]);
        if (auto s = parse_sex(sex_text)) {
            r.sex = *s;
        } else if (!sex_text.empty()) {
            warn(row_no, "sex", sex_text);
        }

        r.path = std::string(trim(row[c_path]));
        if (r.path.empty()) throw ParseError("manifest row " + std::to_string(row_no) + ": empty path");

        out.records.push_back(std::move(r));
    }
    return out;
}

std::string write_manifest(const std::vector<ImageRecord>& records, const std::map<std::string, double>* weights) {
    std::ostringstream out;
    std::vector<std::string> header(kManifestColumns.begin(), kManifestColumns.end());
    if (weights) header.emplace_back("weight");
    csv::write_row(out, header);
    for (const auto& r : records) {
        std::vector<std::string> row;
        for (auto f : {Field::image_id, Field::source, Field::diagnosis, Field::verification,
                       Field::difficulty, Field::age, Field::sex, Field::path}) {
            row.push_back(field_text(r, f));
        }
        if (weights) {
            auto it = weights->find(r.image_id);
            if (it == weights->end()) throw ValidationError("no weight for image '" + r.image_id + "'");
            row.push_back(csv::format_real(it->second));
        }
        csv::write_row(out, row);
    }
    return out.str();
}

// ---------------------------------------------------------------------------

bool Predicate::matches(const ImageRecord& r) const {
    if (field == Field::age && !value.empty()) {
        if (!r.age) return false;
        const auto rhs = csv::parse_integer(value, "age operand");
        return compare_int(*r.age, op, rhs);
    }
    const auto lhs = field_text(r, field);
    switch (op) {
    case CompareOp::eq: return lhs == value;
    case CompareOp::ne: return lhs != value;
    default: return false;
    }
}

bool ExclusionRule::excludes(const ImageRecord& r) const {
    if (all_of.empty()) return false;
    return std::all_of(all_of.begin(), all_of.end(), [&](const Predicate& p) { return p.matches(r); });
}

std::string ExclusionRule::describe() const {
    if (all_of.empty()) return "none";
    std::string out;
    for (const auto& p : all_of) {
        if (!out.empty()) out += " && ";
        out += std::string(to_string(p.field)) + " " + std::string(to_string(p.op)) + " " + p.value;
    }
    return out;
}

void ExclusionRule::validate() const {
    for (const auto& p : all_of) {
        const bool ordering = p.op != CompareOp::eq && p.op != CompareOp::ne;
        if (ordering && p.field != Field::age) {
            throw ValidationError("rule '" + describe() + "': ordering operator on non-numeric field " +
                                  std::string(to_string(p.field)));
        }
        bool ok = true;
        switch (p.field) {
        case Field::image_id:
        case Field::path: break;
        case Field::source: ok = parse_source(p.value).has_value(); break;
        case Field::diagnosis: ok = parse_diagnosis(p.value).has_value(); break;
        case Field::verification: ok = parse_verification(p.value).has_value(); break;
        case Field::difficulty: ok = parse_difficulty(p.value).has_value(); break;
        case Field::sex: ok = p.value.empty() || parse_sex(p.value).has_value(); break;
        case Field::age:
            if (p.value.empty()) {
                ok = !ordering;
            } else {
                try {
                    csv::parse_integer(p.value, "age");
                } catch (const ParseError&) {
                    ok = false;
                }
            }
            break;
        }
        if (!ok) {
            throw ValidationError("rule '" + describe() + "': invalid operand '" + p.value + "' for field " +
                                  std::string(to_string(p.field)));
        }
    }
}

ExclusionRule ExclusionRule::parse(std::string_view text) {
    ExclusionRule rule;
    text = trim(text);
    if (text == "none") return rule;
    if (text.empty()) throw ValidationError("empty exclusion rule");

    while (true) {
        const auto amp = text.find("&&");
        const auto term = trim(text.substr(0, amp));

        // Longest operators first so "<=" is not read as "<".
        static constexpr std::array<std::pair<std::string_view, CompareOp>, 6> kOps{{
            {"==", CompareOp::eq}, {"!=", CompareOp::ne}, {"<=", CompareOp::le},
            {">=", CompareOp::ge}, {"<", CompareOp::lt},  {">", CompareOp::gt},
        }};
        std::optional<Predicate> pred;
        for (const auto& [sym, op] : kOps) {
            const auto pos = term.find(sym);
            if (pos == std::string_view::npos) continue;
            const auto field_name = trim(term.substr(0, pos));
            const auto field = parse_field(field_name);
            if (!field) throw ValidationError("rule references unknown field '" + std::string(field_name) + "'");
            pred = Predicate{*field, op, std::string(trim(term.substr(pos + sym.size())))};
            break;
        }
        if (!pred) throw ValidationError("rule term without operator: '" + std::string(term) + "'");
        rule.all_of.push_back(std::move(*pred));

        if (amp == std::string_view::npos) break;
        text = text.substr(amp + 2);
    }
    rule.validate();
    return rule;
}

void AssemblyProfile::validate() const {
    if (name.empty()) throw ValidationError("assembly profile name is empty");
    for (const auto& r : exclusion_rules) r.validate();
}

std::vector<ExclusionRule> annotation_clash_rules() {
    return {
        ExclusionRule::parse("source == isic_archive && diagnosis == unknown"),
        ExclusionRule::parse("source == atlas && diagnosis == other"),
        ExclusionRule::parse("source == irma && diagnosis == other"),
        ExclusionRule::parse("source == ph2 && diagnosis == other"),
    };
}

AssemblyProfile deploy_profile() {
    return {"deploy", {kAllSources.begin(), kAllSources.end()}, annotation_clash_rules()};
}

AssemblyProfile semi_profile() {
    return {"semi", {Source::isic_challenge, Source::isic_archive, Source::atlas}, annotation_clash_rules()};
}

std::optional<AssemblyProfile> named_profile(std::string_view name) {
    if (name == "deploy") return deploy_profile();
    if (name == "semi") return semi_profile();
    return std::nullopt;
}

DatasetAssembly assemble(const std::vector<ImageRecord>& records, const AssemblyProfile& profile) {
    profile.validate();
    DatasetAssembly out;
    out.profile_name = profile.name;
    for (const auto& r : records) {
        if (!profile.included_sources.contains(r.source)) continue;
        const bool excluded = std::any_of(profile.exclusion_rules.begin(), profile.exclusion_rules.end(),
                                          [&](const ExclusionRule& rule) { return rule.excludes(r); });
        if (!excluded) out.records.push_back(r);
    }
    std::sort(out.records.begin(), out.records.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.image_id < b.image_id; });
    for (const auto& r : out.records) ++out.class_counts[r.diagnosis];
    return out;
}

ExclusionRule age_cluster_exclusion(const std::vector<ImageRecord>& records, int age, Source source,
                                    std::size_t min_cluster_size) {
    if (min_cluster_size < 1) throw ValidationError("min_cluster_size must be >= 1");
    const auto group = std::count_if(records.begin(), records.end(), [&](const ImageRecord& r) {
        return r.source == source && r.age && *r.age == age;
    });
    if (group == 0 || static_cast<std::size_t>(group) < min_cluster_size) return {};
    return ExclusionRule{{
        Predicate{Field::source, CompareOp::eq, std::string(to_string(source))},
        Predicate{Field::age, CompareOp::eq, std::to_string(age)},
    }};
}

// ---------------------------------------------------------------------------

void WeightScheme::validate() const {
    for (const auto& [tier, w] : tier_weights) {
        if (!(w > 0.0)) {
            throw ValidationError("tier weight for " + std::string(to_string(tier)) + " must be positive");
        }
    }
    if (!(official_source_weight > 0.0)) throw ValidationError("official_source_weight must be positive");
}

std::map<std::string, double> compute_sample_weights(const DatasetAssembly& assembly, const WeightScheme& scheme) {
    scheme.validate();
    if (assembly.records.empty()) throw ValidationError("cannot weight an empty assembly");

    std::map<Diagnosis, std::size_t> counts;
    for (const auto& r : assembly.records) ++counts[r.diagnosis];
    const double n_total = static_cast<double>(assembly.records.size());
    const double k_classes = static_cast<double>(counts.size());

    auto class_weight = [&](const ImageRecord& r) {
        return n_total / (k_classes * static_cast<double>(counts.at(r.diagnosis)));
    };
    auto tier_weight = [&](const ImageRecord& r) {
        if (r.source == Source::isic_challenge) return scheme.official_source_weight;
        auto it = scheme.tier_weights.find(r.verification);
        if (it == scheme.tier_weights.end()) {
            throw ValidationError("no tier weight for verification " + std::string(to_string(r.verification)));
        }
        return it->second;
    };

    std::map<std::string, double> weights;
    for (const auto& r : assembly.records) {
        double w = 1.0;
        switch (scheme.kind) {
        case WeightKind::uniform: break;
        case WeightKind::class_inverse: w = class_weight(r); break;
        case WeightKind::verification_tier: w = tier_weight(r); break;
        case WeightKind::combined: w = class_weight(r) * tier_weight(r); break;
        }
        weights.emplace(r.image_id, w);
    }
    return weights;
}

Curriculum build_curriculum(const DatasetAssembly& assembly) {
    Curriculum c;
    for (const auto& r : assembly.records) {
        const bool atlas = r.source == Source::atlas;
        if (atlas && r.difficulty == Difficulty::easy) c.phases[0].push_back(r.image_id);
        if (atlas && (r.difficulty == Difficulty::easy || r.difficulty == Difficulty::moderate)) {
            c.phases[1].push_back(r.image_id);
        }
        c.phases[2].push_back(r.image_id);
    }
    for (auto& phase : c.phases) std::sort(phase.begin(), phase.end());
    return c;
}

}  // namespace lesionkit::catalog
