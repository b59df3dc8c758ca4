#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vjump/segmentation.hpp"
#include "vjump/session.hpp"
#include "vjump/vocabulary.hpp"

namespace vjump {

/// Ground-truth jump height for one annotated segment.
struct HeightRecord {
    std::string subject_id;
    Segment segment;
    double height_m = 0.0;

    friend bool operator==(const HeightRecord&, const HeightRecord&) = default;
};

inline constexpr std::string_view kSessionHeader = "t,ax,ay,az,gx,gy,gz";
inline constexpr std::string_view kAnnotationHeader = "start_sample,end_sample,label";
inline constexpr std::string_view kHeightsHeader = "subject_id,start_sample,end_sample,label,height_m";

/// Reads `t,ax,ay,az,gx,gy,gz[,label]`. Timestamps must advance by 1/100 s (within 1e-6 s).
/// The subject id defaults to the file stem.
ImuSession read_session_csv(const std::filesystem::path& path,
                            const ClassVocabulary& vocab = ClassVocabulary::standard());
/// Numbers are written with 9 significant digits; labels as class names when present.
void write_session_csv(const ImuSession& session, const std::filesystem::path& path,
                       const ClassVocabulary& vocab = ClassVocabulary::standard());
std::string format_session_csv(const ImuSession& session,
                               const ClassVocabulary& vocab = ClassVocabulary::standard());

/// Rows `start_sample,end_sample,label`, sorted by start on return. `length` (when nonzero)
/// bounds end_sample.
std::vector<Segment> read_annotations(const std::filesystem::path& path,
                                      const ClassVocabulary& vocab = ClassVocabulary::standard(),
                                      std::size_t length = 0);
void write_annotations(std::span<const Segment> segments, const std::filesystem::path& path,
                       const ClassVocabulary& vocab = ClassVocabulary::standard());

std::vector<HeightRecord> read_heights(const std::filesystem::path& path,
                                       const ClassVocabulary& vocab = ClassVocabulary::standard());
void write_heights(std::span<const HeightRecord> records, const std::filesystem::path& path,
                   const ClassVocabulary& vocab = ClassVocabulary::standard());

std::string read_text_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
/// printf("%.9g").
std::string format_number(double value);

}  // namespace vjump
