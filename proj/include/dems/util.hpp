#ifndef DEMS_UTIL_HPP
#define DEMS_UTIL_HPP

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace dems {

// Writes `content` to `path` atomically (temp file in the same directory,
// then rename).
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

// Runs `writer` against a temp path next to `path`, then renames the result
// into place. Used for binary artifacts (checkpoints, png) where the payload
// is produced by a library call that wants a filename.
void atomic_write_file(const std::filesystem::path& path,
                       const std::function<void(const std::filesystem::path&)>& writer);

// Minimal CSV emission; fields are joined with commas, rows with newlines.
std::string csv_row(const std::vector<std::string>& fields);

std::string format_double(double v, int precision = 6);

// key = value lines, used for run manifests and split records.
std::string kv_line(const std::string& key, const std::string& value);

}  // namespace dems

#endif
