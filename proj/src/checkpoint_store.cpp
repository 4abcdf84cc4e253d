#include "wdyn/checkpoint_store.hpp"

#include "wdyn/error.hpp"
#include "wdyn/half.hpp"
#include "wdyn/io_util.hpp"
#include "wdyn/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cstring>
#include <regex>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

static_assert(std::endian::native == std::endian::little, "WTS1 I/O assumes a little-endian host");

namespace wdyn::store {

namespace {

constexpr std::array<char, 4> kMagic{'W', 'T', 'S', '1'};
constexpr std::uint64_t kAlign = 64;
// Upper bound on bytes mapped at once by strided reads.
constexpr std::uint64_t kWindowBytes = 8u << 20;

std::uint64_t align_up(std::uint64_t x, std::uint64_t a) noexcept {
    return (x + a - 1) / a * a;
}

void validate_shape(const Shape& shape) {
    if (shape.empty()) {
        throw DataError("empty shape");
    }
    for (auto dim : shape) {
        if (dim <= 0) {
            throw DataError("empty shape");
        }
    }
}

class FileDescriptor {
public:
    explicit FileDescriptor(const std::filesystem::path& path) : fd_(::open(path.c_str(), O_RDONLY | O_CLOEXEC)) {
        if (fd_ < 0) {
            throw DataError("cannot open " + path.string() + ": " + std::strerror(errno));
        }
    }
    ~FileDescriptor() { ::close(fd_); }
    FileDescriptor(const FileDescriptor&) = delete;
    FileDescriptor& operator=(const FileDescriptor&) = delete;

    int get() const noexcept { return fd_; }

private:
    int fd_;
};

// Read-only private mapping of [offset, offset + length) of a file.
class MappedRange {
public:
    MappedRange(int fd, std::uint64_t offset, std::uint64_t length) {
        static const auto page = static_cast<std::uint64_t>(::sysconf(_SC_PAGESIZE));
        const std::uint64_t base = offset / page * page;
        lead_ = offset - base;
        length_ = length + lead_;
        if (length == 0) {
            return;
        }
        addr_ = ::mmap(nullptr, length_, PROT_READ, MAP_PRIVATE, fd, static_cast<off_t>(base));
        if (addr_ == MAP_FAILED) {
            addr_ = nullptr;
            throw DataError(std::string("mmap failed: ") + std::strerror(errno));
        }
    }
    ~MappedRange() {
        if (addr_ != nullptr) {
            ::munmap(addr_, length_);
        }
    }
    MappedRange(const MappedRange&) = delete;
    MappedRange& operator=(const MappedRange&) = delete;

    const std::byte* data() const noexcept { return static_cast<const std::byte*>(addr_) + lead_; }

private:
    void* addr_ = nullptr;
    std::uint64_t lead_ = 0;
    std::uint64_t length_ = 0;
};

bool read_exact(int fd, void* buf, std::size_t n, off_t offset) {
    auto* p = static_cast<char*>(buf);
    while (n > 0) {
        const ssize_t got = ::pread(fd, p, n, offset);
        if (got <= 0) {
            if (got < 0 && errno == EINTR) {
                continue;
            }
            return false;
        }
        p += got;
        n -= static_cast<std::size_t>(got);
        offset += got;
    }
    return true;
}

} // namespace

std::size_t dtype_width(DType dtype) noexcept {
    return dtype == DType::f16 ? 2 : 4;
}

std::string_view dtype_name(DType dtype) noexcept {
    return dtype == DType::f16 ? "f16" : "f32";
}

DType parse_dtype(std::string_view name) {
    if (name == "f16") {
        return DType::f16;
    }
    if (name == "f32") {
        return DType::f32;
    }
    throw DataError("unsupported dtype '" + std::string(name) + "'");
}

std::uint64_t element_count(const Shape& shape) noexcept {
    std::uint64_t n = 1;
    for (auto d : shape) {
        n *= static_cast<std::uint64_t>(d);
    }
    return shape.empty() ? 0 : n;
}

std::size_t strided_count(std::uint64_t elements, std::size_t stride) noexcept {
    return static_cast<std::size_t>((elements + stride - 1) / stride);
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(DType dtype, Shape shape, std::vector<std::byte> bytes)
    : dtype_(dtype), shape_(std::move(shape)), bytes_(std::move(bytes)) {}

Tensor Tensor::from_bytes(DType dtype, Shape shape, std::vector<std::byte> bytes) {
    validate_shape(shape);
    if (bytes.size() != element_count(shape) * dtype_width(dtype)) {
        throw DataError("value length does not match shape");
    }
    return Tensor(dtype, std::move(shape), std::move(bytes));
}

Tensor Tensor::f32(Shape shape, std::span<const float> values) {
    validate_shape(shape);
    if (values.size() != element_count(shape)) {
        throw DataError("value length does not match shape");
    }
    auto raw = std::as_bytes(values);
    return Tensor(DType::f32, std::move(shape), std::vector<std::byte>(raw.begin(), raw.end()));
}

Tensor Tensor::f16(Shape shape, std::span<const float> values) {
    validate_shape(shape);
    if (values.size() != element_count(shape)) {
        throw DataError("value length does not match shape");
    }
    std::vector<std::uint16_t> bits(values.size());
    std::transform(values.begin(), values.end(), bits.begin(), float_to_half);
    return f16_bits(std::move(shape), bits);
}

Tensor Tensor::f16_bits(Shape shape, std::span<const std::uint16_t> bits) {
    validate_shape(shape);
    if (bits.size() != element_count(shape)) {
        throw DataError("value length does not match shape");
    }
    auto raw = std::as_bytes(bits);
    return Tensor(DType::f16, std::move(shape), std::vector<std::byte>(raw.begin(), raw.end()));
}

std::vector<float> Tensor::to_f32() const {
    std::vector<float> out(elements());
    if (dtype_ == DType::f32) {
        std::memcpy(out.data(), bytes_.data(), bytes_.size());
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) {
            std::uint16_t h;
            std::memcpy(&h, bytes_.data() + 2 * i, 2);
            out[i] = half_to_float(h);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Writing

std::filesystem::path checkpoint_filename(std::int64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step-%08lld.wts", static_cast<long long>(step));
    return buf;
}

void write_checkpoint(std::int64_t step, const TensorMap& tensors, const std::filesystem::path& path) {
    if (step < 0) {
        throw DataError("negative step");
    }
    nlohmann::json header;
    header["step"] = step;
    header["tensors"] = nlohmann::json::object();
    std::uint64_t cursor = 0;
    for (const auto& [name, tensor] : tensors) {
        if (name.empty()) {
            throw DataError("empty tensor name");
        }
        validate_shape(tensor.shape());
        const std::uint64_t nbytes = tensor.elements() * dtype_width(tensor.dtype());
        if (nbytes != tensor.bytes().size()) {
            throw DataError("tensor '" + name + "': value length does not match shape");
        }
        header["tensors"][name] = {{"dtype", dtype_name(tensor.dtype())},
                                   {"shape", tensor.shape()},
                                   {"offset", cursor},
                                   {"nbytes", nbytes}};
        cursor = align_up(cursor + nbytes, kAlign);
    }

    const std::string text = header.dump();
    const std::uint64_t data_offset = align_up(8 + text.size(), kAlign);
    std::uint64_t total = data_offset;
    for (const auto& [name, tensor] : tensors) {
        total = std::max<std::uint64_t>(total, data_offset + header["tensors"][name]["offset"].get<std::uint64_t>() +
                                                   tensor.bytes().size());
    }

    std::vector<std::byte> buffer(total, std::byte{0});
    std::memcpy(buffer.data(), kMagic.data(), 4);
    const auto header_len = static_cast<std::uint32_t>(text.size());
    std::memcpy(buffer.data() + 4, &header_len, 4);
    std::memcpy(buffer.data() + 8, text.data(), text.size());
    for (const auto& [name, tensor] : tensors) {
        const auto offset = header["tensors"][name]["offset"].get<std::uint64_t>();
        std::memcpy(buffer.data() + data_offset + offset, tensor.bytes().data(), tensor.bytes().size());
    }
    io::write_file_atomic(path, buffer);
}

// ---------------------------------------------------------------------------
// Reading

CheckpointFile::CheckpointFile(std::filesystem::path path) : path_(std::move(path)) {
    FileDescriptor fd(path_);
    struct stat st {};
    if (::fstat(fd.get(), &st) != 0) {
        throw DataError("cannot stat " + path_.string());
    }
    file_size_ = static_cast<std::uint64_t>(st.st_size);
    const std::string where = path_.string() + ": ";

    std::array<char, 8> prefix{};
    if (file_size_ < 8 || !read_exact(fd.get(), prefix.data(), 8, 0)) {
        throw DataError(where + "truncated header");
    }
    if (!std::equal(kMagic.begin(), kMagic.end(), prefix.begin())) {
        throw DataError(where + "bad magic");
    }
    std::uint32_t header_len = 0;
    std::memcpy(&header_len, prefix.data() + 4, 4);
    if (8 + static_cast<std::uint64_t>(header_len) > file_size_) {
        throw DataError(where + "header length exceeds file size");
    }
    std::string text(header_len, '\0');
    if (!read_exact(fd.get(), text.data(), header_len, 8)) {
        throw DataError(where + "truncated header");
    }
    data_offset_ = align_up(8 + header_len, kAlign);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(where + "invalid header JSON: " + e.what());
    }
    if (!header.is_object() || !header.contains("step") || !header["step"].is_number_integer() ||
        !header.contains("tensors") || !header["tensors"].is_object()) {
        throw DataError(where + "header must contain integer 'step' and object 'tensors'");
    }
    step_ = header["step"].get<std::int64_t>();
    if (step_ < 0) {
        throw DataError(where + "negative step");
    }

    const std::uint64_t data_size = file_size_ > data_offset_ ? file_size_ - data_offset_ : 0;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
    for (const auto& [name, entry] : header["tensors"].items()) {
        try {
            TensorMeta meta;
            meta.name = name;
            meta.dtype = parse_dtype(entry.at("dtype").get<std::string>());
            meta.shape = entry.at("shape").get<Shape>();
            meta.offset = entry.at("offset").get<std::uint64_t>();
            meta.nbytes = entry.at("nbytes").get<std::uint64_t>();
            validate_shape(meta.shape);
            if (meta.nbytes != meta.elements() * dtype_width(meta.dtype)) {
                throw DataError("nbytes does not match shape and dtype");
            }
            if (meta.offset > data_size || meta.nbytes > data_size - meta.offset) {
                throw DataError("payload extends past end of file");
            }
            ranges.emplace_back(meta.offset, meta.nbytes);
            tensors_.emplace(name, std::move(meta));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + "tensor '" + name + "': " + e.what());
        } catch (const DataError& e) {
            throw DataError(where + "tensor '" + name + "': " + e.what());
        }
    }
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i) {
        if (ranges[i - 1].first + ranges[i - 1].second > ranges[i].first) {
            throw DataError(where + "overlapping tensor payloads");
        }
    }
}

const TensorMeta& CheckpointFile::meta(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) {
        throw DataError("unknown tensor '" + name + "' in " + path_.string());
    }
    return it->second;
}

Tensor CheckpointFile::read(const std::string& name) const {
    const TensorMeta& m = meta(name);
    FileDescriptor fd(path_);
    MappedRange map(fd.get(), data_offset_ + m.offset, m.nbytes);
    std::vector<std::byte> bytes(map.data(), map.data() + m.nbytes);
    return Tensor::from_bytes(m.dtype, m.shape, std::move(bytes));
}

TensorMap CheckpointFile::read_all() const {
    TensorMap out;
    for (const auto& [name, m] : tensors_) {
        out.emplace(name, read(name));
    }
    return out;
}

void CheckpointFile::read_strided(const std::string& name, std::size_t stride, std::span<float> out) const {
    if (stride == 0) {
        throw UsageError("stride must be >= 1");
    }
    const TensorMeta& m = meta(name);
    const std::uint64_t n = m.elements();
    if (out.size() != strided_count(n, stride)) {
        throw DataError("output buffer size does not match strided element count");
    }
    const std::uint64_t width = dtype_width(m.dtype);
    const std::uint64_t window_elems = std::max<std::uint64_t>(kWindowBytes / width, 1);

    FileDescriptor fd(path_);
    std::size_t produced = 0;
    for (std::uint64_t first = 0; first < n; first += window_elems) {
        const std::uint64_t last = std::min(n, first + window_elems);
        // first index in [first, last) that is a multiple of stride
        std::uint64_t i = (first + stride - 1) / stride * stride;
        if (i >= last) {
            continue;
        }
        const std::uint64_t lo = i;
        const std::uint64_t hi = (last - 1 - lo) / stride * stride + lo + 1;
        MappedRange map(fd.get(), data_offset_ + m.offset + lo * width, (hi - lo) * width);
        const std::byte* base = map.data();
        for (; i < last; i += stride) {
            const std::byte* p = base + (i - lo) * width;
            if (m.dtype == DType::f32) {
                std::memcpy(&out[produced], p, 4);
            } else {
                std::uint16_t h;
                std::memcpy(&h, p, 2);
                out[produced] = half_to_float(h);
            }
            ++produced;
        }
    }
}

std::vector<float> CheckpointFile::read_f32(const std::string& name) const {
    std::vector<float> out(meta(name).elements());
    read_strided(name, 1, out);
    return out;
}

// ---------------------------------------------------------------------------
// Series

std::vector<std::int64_t> CheckpointSeries::steps() const {
    std::vector<std::int64_t> s;
    s.reserve(entries.size());
    for (const auto& e : entries) {
        s.push_back(e.step);
    }
    return s;
}

const TensorInfo& CheckpointSeries::tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
        throw DataError("unknown tensor '" + name + "' in series " + dir.string());
    }
    return it->second;
}

CheckpointSeries open_series(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw DataError("not a directory: " + dir.string());
    }
    static const std::regex pattern(R"(step-(\d+)\.wts)");

    CheckpointSeries series;
    series.dir = dir;
    for (const auto& item : std::filesystem::directory_iterator(dir)) {
        std::smatch match;
        const std::string fname = item.path().filename().string();
        if (!item.is_regular_file() || !std::regex_match(fname, match, pattern)) {
            continue;
        }
        series.entries.push_back({std::stoll(match[1].str()), item.path()});
    }
    if (series.entries.empty()) {
        throw DataError("no checkpoints in " + dir.string());
    }
    std::sort(series.entries.begin(), series.entries.end(),
              [](const SeriesEntry& a, const SeriesEntry& b) { return a.step < b.step; });
    for (std::size_t i = 1; i < series.entries.size(); ++i) {
        if (series.entries[i].step == series.entries[i - 1].step) {
            throw DataError("duplicate step " + std::to_string(series.entries[i].step) + " in " + dir.string());
        }
    }

    bool first = true;
    for (const auto& entry : series.entries) {
        const CheckpointFile file(entry.path);
        if (file.step() != entry.step) {
            throw DataError(entry.path.string() + ": header step " + std::to_string(file.step()) +
                            " does not match filename step " + std::to_string(entry.step));
        }
        if (first) {
            for (const auto& [name, m] : file.tensors()) {
                series.tensors.emplace(name, TensorInfo{m.dtype, m.shape});
            }
            first = false;
            continue;
        }
        for (auto it = series.tensors.begin(); it != series.tensors.end();) {
            auto found = file.tensors().find(it->first);
            if (found == file.tensors().end()) {
                it = series.tensors.erase(it);
                continue;
            }
            if (found->second.dtype != it->second.dtype || found->second.shape != it->second.shape) {
                throw DataError("inconsistent tensor shapes across checkpoints for '" + it->first + "' at " +
                                entry.path.string());
            }
            ++it;
        }
    }
    return series;
}

void prepare_series_dir(const std::filesystem::path& dir, const std::vector<std::int64_t>& steps) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw DataError("cannot create directory " + dir.string());
    }
    static const std::regex pattern(R"(step-(\d+)\.wts)");
    for (const auto& item : std::filesystem::directory_iterator(dir)) {
        std::smatch match;
        const std::string fname = item.path().filename().string();
        if (!std::regex_match(fname, match, pattern)) {
            continue;
        }
        const std::int64_t step = std::stoll(match[1].str());
        if (std::find(steps.begin(), steps.end(), step) == steps.end() || fname != checkpoint_filename(step).string()) {
            throw DataError(dir.string() + " already contains checkpoint " + fname + " from another run");
        }
    }
}

SeriesSlice flatten_series(const CheckpointSeries& series, const std::string& tensor, std::size_t stride) {
    if (stride == 0) {
        throw UsageError("stride must be >= 1");
    }
    const TensorInfo& info = series.tensor(tensor);
    SeriesSlice slice;
    slice.tensor = tensor;
    slice.steps = series.steps();
    slice.stride = stride;
    slice.start = 0;
    slice.cols = strided_count(element_count(info.shape), stride);
    slice.values.resize(slice.rows() * slice.cols);

    parallel_for(series.entries.size(), [&](std::size_t t) {
        const CheckpointFile file(series.entries[t].path);
        file.read_strided(tensor, stride, std::span<float>(slice.values).subspan(t * slice.cols, slice.cols));
    });
    return slice;
}

} // namespace wdyn::store
