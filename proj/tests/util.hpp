#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

namespace testutil {

// Fresh scratch directory under the system temp root, removed on destruction.
class TempDir {
 public:
    explicit TempDir(const std::string& tag) {
        dir_ = std::filesystem::temp_directory_path() /
               ("nlce_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(dir_);
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() { std::filesystem::remove_all(dir_); }

    const std::filesystem::path& path() const { return dir_; }

    std::filesystem::path write(const std::string& name, const std::string& contents) const {
        const auto p = dir_ / name;
        std::ofstream out(p);
        out << contents;
        return p;
    }

 private:
    std::filesystem::path dir_;
};

}  // namespace testutil
