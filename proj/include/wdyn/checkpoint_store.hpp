#pragma once

// WTS1 checkpoint containers and memory-mapped access to tensor series.
//
// Layout (little-endian):
//   [0, 4)        magic "WTS1"
//   [4, 8)        u32 header length H
//   [8, 8 + H)    UTF-8 JSON {"step": int, "tensors": {name: {dtype, shape, offset, nbytes}}}
//   [D, ...)      data region, D = first multiple of 64 >= 8 + H; offsets are relative to D
// A series is a directory of files named step-<8-digit step>.wts.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wdyn::store {

enum class DType { f16, f32 };

std::size_t dtype_width(DType dtype) noexcept;
std::string_view dtype_name(DType dtype) noexcept;
DType parse_dtype(std::string_view name);

using Shape = std::vector<std::int64_t>;

std::uint64_t element_count(const Shape& shape) noexcept;

struct TensorMeta {
    std::string name;
    DType dtype = DType::f32;
    Shape shape;
    std::uint64_t offset = 0;
    std::uint64_t nbytes = 0;

    std::uint64_t elements() const noexcept { return element_count(shape); }
};

// An owned tensor payload held as the exact bytes that go on disk.
class Tensor {
public:
    static Tensor f32(Shape shape, std::span<const float> values);
    // Rounds each value to binary16 (nearest, ties to even).
    static Tensor f16(Shape shape, std::span<const float> values);
    static Tensor f16_bits(Shape shape, std::span<const std::uint16_t> bits);
    static Tensor from_bytes(DType dtype, Shape shape, std::vector<std::byte> bytes);

    DType dtype() const noexcept { return dtype_; }
    const Shape& shape() const noexcept { return shape_; }
    std::span<const std::byte> bytes() const noexcept { return bytes_; }
    std::uint64_t elements() const noexcept { return element_count(shape_); }

    // Values promoted to f32.
    std::vector<float> to_f32() const;

    bool operator==(const Tensor&) const = default;

private:
    Tensor(DType dtype, Shape shape, std::vector<std::byte> bytes);

    DType dtype_ = DType::f32;
    Shape shape_;
    std::vector<std::byte> bytes_;
};

using TensorMap = std::map<std::string, Tensor>;

std::filesystem::path checkpoint_filename(std::int64_t step);

// Writes a WTS1 container. The file appears atomically (temp file + rename).
void write_checkpoint(std::int64_t step, const TensorMap& tensors, const std::filesystem::path& path);

// A parsed, validated container. Payloads are read through short-lived
// mappings of the requested byte ranges only.
class CheckpointFile {
public:
    explicit CheckpointFile(std::filesystem::path path);

    const std::filesystem::path& path() const noexcept { return path_; }
    std::int64_t step() const noexcept { return step_; }
    const std::map<std::string, TensorMeta>& tensors() const noexcept { return tensors_; }
    const TensorMeta& meta(const std::string& name) const;

    Tensor read(const std::string& name) const;
    TensorMap read_all() const;

    // Writes every stride-th element (starting at element 0) promoted to f32.
    // out.size() must equal ceil(elements / stride).
    void read_strided(const std::string& name, std::size_t stride, std::span<float> out) const;
    std::vector<float> read_f32(const std::string& name) const;

private:
    std::filesystem::path path_;
    std::int64_t step_ = 0;
    std::uint64_t file_size_ = 0;
    std::uint64_t data_offset_ = 0;
    std::map<std::string, TensorMeta> tensors_;
};

struct SeriesEntry {
    std::int64_t step = 0;
    std::filesystem::path path;
};

struct TensorInfo {
    DType dtype = DType::f32;
    Shape shape;
};

struct CheckpointSeries {
    std::filesystem::path dir;
    std::vector<SeriesEntry> entries;        // strictly increasing steps
    std::map<std::string, TensorInfo> tensors; // present in every entry

    std::vector<std::int64_t> steps() const;
    const TensorInfo& tensor(const std::string& name) const;
};

CheckpointSeries open_series(const std::filesystem::path& dir);

// Creates `dir` if needed and refuses to proceed when it already holds
// checkpoint files for steps outside `steps` (they would join the series).
void prepare_series_dir(const std::filesystem::path& dir, const std::vector<std::int64_t>& steps);

// One flattened tensor across T checkpoints: a row-major (T x K) f32 matrix.
struct SeriesSlice {
    std::string tensor;
    std::vector<std::int64_t> steps;
    std::size_t cols = 0; // K
    std::size_t stride = 1;
    std::size_t start = 0;
    std::vector<float> values;

    std::size_t rows() const noexcept { return steps.size(); }
    std::span<const float> row(std::size_t t) const noexcept {
        return std::span<const float>(values).subspan(t * cols, cols);
    }
};

std::size_t strided_count(std::uint64_t elements, std::size_t stride) noexcept;

SeriesSlice flatten_series(const CheckpointSeries& series, const std::string& tensor, std::size_t stride = 1);

} // namespace wdyn::store
