#ifndef CTSPEC_TEST_UTIL_HPP
#define CTSPEC_TEST_UTIL_HPP

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include <Eigen/Dense>

#include "ctspec/series.hpp"

namespace ctspec::testing
{

// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
  public:
    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("ctspec_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

  private:
    std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// T weeks of N x D standard normal embeddings.
inline EmbeddingSeries random_series(int T, Eigen::Index N, Eigen::Index D, std::uint64_t seed)
{
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> normal;
    EmbeddingSeries s;
    s.seed = seed;
    for (int t = 0; t < T; ++t) {
        Eigen::MatrixXd m(N, D);
        for (Eigen::Index i = 0; i < N; ++i)
            for (Eigen::Index a = 0; a < D; ++a)
                m(i, a) = normal(eng);
        s.weeks.push_back(std::move(m));
    }
    return s;
}

} // namespace ctspec::testing

#endif // CTSPEC_TEST_UTIL_HPP
