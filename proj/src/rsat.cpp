#include "rectattn/rsat.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <system_error>

namespace rectattn {

namespace {

constexpr char kMagic[4] = {'R', 'S', 'A', 'T'};

void put_u64(std::string& out, std::uint64_t x)
{
  for (int b = 0; b < 8; ++b) out.push_back(char((x >> (8 * b)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t x)
{
  for (int b = 0; b < 4; ++b) out.push_back(char((x >> (8 * b)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint8_t u8()
  {
    need(1);
    return std::uint8_t(bytes_[pos_++]);
  }

  std::uint64_t u64() { return uint_le<std::uint64_t>(8); }
  std::uint32_t u32() { return uint_le<std::uint32_t>(4); }

  std::string_view take(std::size_t n)
  {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  template <typename U>
  U uint_le(int width)
  {
    need(std::size_t(width));
    U x = 0;
    for (int b = 0; b < width; ++b) x |= U(std::uint8_t(bytes_[pos_ + b])) << (8 * b);
    pos_ += std::size_t(width);
    return x;
  }

  void need(std::size_t n) const
  {
    if (bytes_.size() - pos_ < n) throw IoError("truncated RSAT data");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t RsatTensor::element_count() const
{
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string encode_rsat(const RsatTensor& tensor)
{
  if (tensor.dims.size() > 255) throw ShapeError("RSAT rank exceeds 255");
  if (tensor.element_count() != tensor.data.size()) throw ShapeError("RSAT dims do not match data");
  std::string out(kMagic, 4);
  out.push_back(char(kRsatVersion));
  out.push_back(char(tensor.dtype));
  out.push_back(char(tensor.dims.size()));
  for (auto d : tensor.dims) put_u64(out, d);
  if (tensor.dtype == Precision::Single) {
    for (double x : tensor.data) put_u32(out, std::bit_cast<std::uint32_t>(float(x)));
  } else {
    for (double x : tensor.data) put_u64(out, std::bit_cast<std::uint64_t>(x));
  }
  return out;
}

RsatTensor decode_rsat(std::string_view bytes)
{
  Reader in(bytes);
  if (in.take(4) != std::string_view(kMagic, 4)) throw IoError("bad RSAT magic");
  if (auto ver = in.u8(); ver != kRsatVersion)
    throw IoError("unsupported RSAT version " + std::to_string(ver));
  RsatTensor t;
  const auto dtype = in.u8();
  if (dtype > 1) throw IoError("unknown RSAT dtype " + std::to_string(dtype));
  t.dtype = Precision(dtype);
  const auto rank = in.u8();
  t.dims.resize(rank);
  for (auto& d : t.dims) d = in.u64();
  const auto count = t.element_count();
  const std::size_t width = t.dtype == Precision::Single ? 4 : 8;
  if (count > bytes.size() / width) throw IoError("truncated RSAT data");
  t.data.resize(count);
  for (auto& x : t.data) {
    x = t.dtype == Precision::Single ? double(std::bit_cast<float>(in.u32()))
                                     : std::bit_cast<double>(in.u64());
  }
  if (!in.done()) throw IoError("trailing bytes after RSAT payload");
  return t;
}

template <typename T>
RsatTensor to_rsat(const Matrix<T>& m)
{
  RsatTensor t;
  t.dtype = precision_of<T>();
  t.dims = {m.rows(), m.cols()};
  t.data.assign(m.values().begin(), m.values().end());
  return t;
}

template <typename T>
Matrix<T> matrix_from_rsat(const RsatTensor& tensor)
{
  std::size_t rows = 0, cols = 0;
  if (tensor.dims.size() == 2) {
    rows = tensor.dims[0];
    cols = tensor.dims[1];
  } else if (tensor.dims.size() == 1) {
    rows = tensor.dims[0];
    cols = 1;
  } else {
    throw ShapeError("expected a rank-1 or rank-2 RSAT tensor, got rank " +
                     std::to_string(tensor.dims.size()));
  }
  std::vector<T> data(tensor.data.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(tensor.data[i]);
  return Matrix<T>(rows, cols, std::move(data));
}

RsatTensor read_rsat(const std::filesystem::path& path)
{
  return decode_rsat(read_file(path));
}

void write_rsat(const std::filesystem::path& path, const RsatTensor& tensor)
{
  write_file_atomic(path, encode_rsat(tensor));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes)
{
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template RsatTensor to_rsat(const Matrix<float>&);
template RsatTensor to_rsat(const Matrix<double>&);
template Matrix<float> matrix_from_rsat(const RsatTensor&);
template Matrix<double> matrix_from_rsat(const RsatTensor&);

}  // namespace rectattn
