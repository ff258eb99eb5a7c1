#include "dems/util.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

namespace dems {

namespace fs = std::filesystem;

namespace {

// Keeps the original extension so format-sniffing writers (cv::imwrite)
// still work on the temp path.
fs::path temp_sibling(const fs::path& path) {
    static std::atomic<unsigned> counter{0};
    std::ostringstream name;
    name << ".tmp" << ::getpid() << "." << counter.fetch_add(1) << "."
         << path.filename().string();
    return path.parent_path() / name.str();
}

}  // namespace

void atomic_write_text(const fs::path& path, const std::string& content) {
    atomic_write_file(path, [&](const fs::path& tmp) {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    });
}

void atomic_write_file(const fs::path& path,
                       const std::function<void(const fs::path&)>& writer) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = temp_sibling(path);
    try {
        writer(tmp);
        fs::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
}

std::string csv_row(const std::vector<std::string>& fields) {
    std::string row;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) row += ',';
        row += fields[i];
    }
    row += '\n';
    return row;
}

std::string format_double(double v, int precision) {
    std::ostringstream os;
    os.precision(precision);
    os << std::fixed << v;
    return os.str();
}

std::string kv_line(const std::string& key, const std::string& value) {
    return key + " = " + value + "\n";
}

}  // namespace dems
