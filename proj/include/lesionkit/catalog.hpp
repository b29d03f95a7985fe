#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace lesionkit::catalog {

enum class Source { isic_challenge, isic_archive, atlas, dermofit, irma, ph2 };
enum class Diagnosis { melanoma, seborrheic_keratosis, nevus, other, unknown };
enum class Verification { unknown_followup, no_followup, followup, histopathology };
enum class Difficulty { easy, moderate, difficult, unknown };
enum class Sex { m, f };

std::string_view to_string(Source v);
std::string_view to_string(Diagnosis v);
std::string_view to_string(Verification v);
std::string_view to_string(Difficulty v);
std::string_view to_string(Sex v);

std::optional<Source> parse_source(std::string_view s);
std::optional<Diagnosis> parse_diagnosis(std::string_view s);
std::optional<Verification> parse_verification(std::string_view s);
std::optional<Difficulty> parse_difficulty(std::string_view s);
std::optional<Sex> parse_sex(std::string_view s);

inline constexpr std::array<Source, 6> kAllSources = {
    Source::isic_challenge, Source::isic_archive, Source::atlas,
    Source::dermofit,       Source::irma,         Source::ph2};

inline constexpr int kMaxAge = 130;

struct ImageRecord {
    std::string image_id;
    Source source = Source::isic_challenge;
    Diagnosis diagnosis = Diagnosis::unknown;
    Verification verification = Verification::unknown_followup;
    Difficulty difficulty = Difficulty::unknown;
    std::optional<int> age;
    std::optional<Sex> sex;
    std::string path;

    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

// ---------------------------------------------------------------------------
// Manifest I/O

inline constexpr std::array<std::string_view, 8> kManifestColumns = {
    "image_id", "source", "diagnosis", "verification", "difficulty", "age", "sex", "path"};

struct ManifestParse {
    std::vector<ImageRecord> records;
    // Number of metadata cells that were unrecognized and mapped to unknown
    // (or to a missing value for age/sex).
    std::size_t warnings = 0;
    std::vector<std::string> warning_messages;
};

// Throws ParseError on a missing required column, an unknown source, an
// empty image_id or path, or a duplicated image_id (the message names it).
ManifestParse parse_manifest(std::string_view csv_text);

// Writes records in the manifest schema. When weights is given, a trailing
// `weight` column is appended; every record must have an entry.
std::string write_manifest(const std::vector<ImageRecord>& records,
                           const std::map<std::string, double>* weights = nullptr);

// ---------------------------------------------------------------------------
// Exclusion rules

enum class Field { image_id, source, diagnosis, verification, difficulty, age, sex, path };
enum class CompareOp { eq, ne, lt, le, gt, ge };

std::string_view to_string(Field f);
std::string_view to_string(CompareOp op);
std::optional<Field> parse_field(std::string_view s);

struct Predicate {
    Field field;
    CompareOp op;
    // Textual operand, in the same vocabulary as the manifest. An empty
    // value compared with eq/ne tests for a missing age or sex.
    std::string value;

    bool matches(const ImageRecord& r) const;
    friend bool operator==(const Predicate&, const Predicate&) = default;
};

// A record is excluded when every predicate matches. A rule with no
// predicates excludes nothing.
struct ExclusionRule {
    std::vector<Predicate> all_of;

    bool is_noop() const { return all_of.empty(); }
    bool excludes(const ImageRecord& r) const;
    std::string describe() const;

    // Throws ValidationError if a predicate uses an operand outside its
    // field's vocabulary or an ordering operator on a non-age field.
    void validate() const;

    // Parses "source == isic_archive && diagnosis == unknown". The literal
    // "none" yields the no-op rule.
    static ExclusionRule parse(std::string_view text);

    friend bool operator==(const ExclusionRule&, const ExclusionRule&) = default;
};

struct AssemblyProfile {
    std::string name;
    std::set<Source> included_sources;
    std::vector<ExclusionRule> exclusion_rules;

    void validate() const;
};

// The annotation-clash exclusions shared by both named profiles. Source
// labels that clash with the challenge classes (Atlas "miscellaneous", IRMA
// "benign", PH2 "atypical nevi") are expected to arrive in the manifest as
// diagnosis=other; unlabeled archive images arrive as diagnosis=unknown.
std::vector<ExclusionRule> annotation_clash_rules();

AssemblyProfile deploy_profile();
// Approximate: reproduces only the documented source subset and the shared
// exclusions.
AssemblyProfile semi_profile();
std::optional<AssemblyProfile> named_profile(std::string_view name);

struct DatasetAssembly {
    std::string profile_name;
    std::vector<ImageRecord> records;  // sorted by image_id
    std::map<Diagnosis, std::size_t> class_counts;
};

DatasetAssembly assemble(const std::vector<ImageRecord>& records, const AssemblyProfile& profile);

// Builds a rule that drops every `source` record aged exactly `age`, but
// only if that group holds at least min_cluster_size records; otherwise
// returns the no-op rule.
ExclusionRule age_cluster_exclusion(const std::vector<ImageRecord>& records, int age, Source source,
                                    std::size_t min_cluster_size);

// ---------------------------------------------------------------------------
// Sample weighting

enum class WeightKind { uniform, class_inverse, verification_tier, combined };

std::optional<WeightKind> parse_weight_kind(std::string_view s);
std::string_view to_string(WeightKind k);

struct WeightScheme {
    WeightKind kind = WeightKind::uniform;
    std::map<Verification, double> tier_weights = {
        {Verification::unknown_followup, 1.0},
        {Verification::no_followup, 1.0},
        {Verification::followup, 2.0},
        {Verification::histopathology, 3.0},
    };
    double official_source_weight = 5.0;

    void validate() const;
};

std::map<std::string, double> compute_sample_weights(const DatasetAssembly& assembly,
                                                     const WeightScheme& scheme);

// ---------------------------------------------------------------------------
// Curriculum

struct Curriculum {
    // phases[0]: atlas & easy; phases[1]: atlas & (easy | moderate);
    // phases[2]: every record. Each is sorted by image_id.
    std::array<std::vector<std::string>, 3> phases;
};

Curriculum build_curriculum(const DatasetAssembly& assembly);

}  // namespace lesionkit::catalog
