#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "ctspec/common.hpp"
#include "ctspec/embed.hpp"

namespace ctspec
{
namespace
{
constexpr std::array<char, 4> magic{'C', 'T', 'S', 'E'};
constexpr std::uint32_t cache_version = 1;

template <typename U>
void put_le(std::ostream& out, U value)
{
    std::array<char, sizeof(U)> bytes{};
    for (std::size_t b = 0; b < sizeof(U); ++b)
        bytes[b] = static_cast<char>((value >> (8 * b)) & 0xFF);
    out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const std::string& path)
{
    std::array<unsigned char, sizeof(U)> bytes{};
    if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
        throw Error(path + ": truncated embedding cache");
    U value = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b)
        value |= static_cast<U>(bytes[b]) << (8 * b);
    return value;
}

} // namespace

void write_embedding_cache(const std::string& path, const Eigen::MatrixXd& vectors, std::uint64_t seed)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write file: " + path);
    out.write(magic.data(), magic.size());
    put_le<std::uint32_t>(out, cache_version);
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(vectors.rows()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(vectors.cols()));
    put_le<std::uint64_t>(out, seed);
    for (Eigen::Index i = 0; i < vectors.rows(); ++i)
        for (Eigen::Index j = 0; j < vectors.cols(); ++j)
            put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(vectors(i, j)));
    if (!out)
        throw Error("failed writing " + path);
}

CachedEmbedding read_embedding_cache(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open file: " + path);
    std::array<char, 4> got{};
    if (!in.read(got.data(), got.size()) || got != magic)
        throw Error(path + ": not an embedding cache (bad magic)");
    const auto version = get_le<std::uint32_t>(in, path);
    if (version != cache_version)
        throw Error(path + ": unsupported embedding cache version " + std::to_string(version));
    const auto rows = get_le<std::uint64_t>(in, path);
    const auto cols = get_le<std::uint64_t>(in, path);
    CachedEmbedding result;
    result.seed = get_le<std::uint64_t>(in, path);
    result.vectors.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < result.vectors.rows(); ++i)
        for (Eigen::Index j = 0; j < result.vectors.cols(); ++j)
            result.vectors(i, j) = std::bit_cast<double>(get_le<std::uint64_t>(in, path));
    if (in.peek() != std::char_traits<char>::eof())
        throw Error(path + ": trailing bytes after embedding data");
    return result;
}

} // namespace ctspec
