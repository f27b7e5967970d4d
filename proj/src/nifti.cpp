#include "udaseg/nifti.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <vector>

namespace udaseg {
namespace {

// nifti1 header, 348 bytes. Field names follow the standard.
#pragma pack(push, 1)
struct Nifti1Header {
  int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  int32_t extents;
  int16_t session_error;
  char regular;
  char dim_info;
  int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  int16_t intent_code;
  int16_t datatype;
  int16_t bitpix;
  int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope, scl_inter;
  int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration, toffset;
  int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "nifti1 header must be 348 bytes");

enum NiftiDatatype : int16_t {
  DT_UINT8 = 2,
  DT_INT16 = 4,
  DT_INT32 = 8,
  DT_FLOAT32 = 16,
  DT_FLOAT64 = 64,
  DT_UINT16 = 512,
};

struct GzFile {
  gzFile f = nullptr;
  explicit GzFile(const std::string& path, const char* mode) { f = gzopen(path.c_str(), mode); }
  ~GzFile() {
    if (f) gzclose(f);
  }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;
};

bool wants_gzip(const std::string& path) {
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

void read_exact(gzFile f, void* buf, size_t n, const std::string& path) {
  int got = gzread(f, buf, static_cast<unsigned>(n));
  if (got < 0 || static_cast<size_t>(got) != n)
    throw DataError("nifti read error in '" + path + "': truncated file");
}

void write_exact(gzFile f, const void* buf, size_t n, const std::string& path) {
  int put = gzwrite(f, buf, static_cast<unsigned>(n));
  if (put < 0 || static_cast<size_t>(put) != n)
    throw DataError("nifti write error for '" + path + "'");
}

Nifti1Header read_header(gzFile f, const std::string& path) {
  Nifti1Header h{};
  read_exact(f, &h, sizeof(h), path);
  if (h.sizeof_hdr != 348) {
    if (h.sizeof_hdr == 1543569408)  // 348 byte-swapped
      throw DataError("nifti '" + path + "': big-endian files are not supported");
    throw DataError("nifti '" + path + "': unreadable header (sizeof_hdr=" +
                    std::to_string(h.sizeof_hdr) + ")");
  }
  if (std::strncmp(h.magic, "n+1", 3) != 0 && std::strncmp(h.magic, "ni1", 3) != 0)
    throw DataError("nifti '" + path + "': bad magic");
  return h;
}

// Reads the full payload as double, applying scl_slope/inter when set.
std::vector<double> read_payload(gzFile f, const Nifti1Header& h, int64_t numel,
                                 const std::string& path) {
  std::vector<double> out(static_cast<size_t>(numel));
  auto convert = [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> raw(static_cast<size_t>(numel));
    read_exact(f, raw.data(), raw.size() * sizeof(T), path);
    for (int64_t i = 0; i < numel; ++i) out[i] = static_cast<double>(raw[i]);
  };
  switch (h.datatype) {
    case DT_UINT8: convert(uint8_t{}); break;
    case DT_INT16: convert(int16_t{}); break;
    case DT_UINT16: convert(uint16_t{}); break;
    case DT_INT32: convert(int32_t{}); break;
    case DT_FLOAT32: convert(float{}); break;
    case DT_FLOAT64: convert(double{}); break;
    default:
      throw DataError("nifti '" + path + "': unsupported datatype code " +
                      std::to_string(h.datatype));
  }
  if (h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f))
    for (auto& v : out) v = v * h.scl_slope + h.scl_inter;
  return out;
}

void skip_to_offset(gzFile f, const Nifti1Header& h, const std::string& path) {
  int64_t extra = static_cast<int64_t>(h.vox_offset) - 348;
  if (extra < 0) throw DataError("nifti '" + path + "': vox_offset before end of header");
  std::vector<char> skip(static_cast<size_t>(extra));
  if (extra > 0) read_exact(f, skip.data(), skip.size(), path);
}

struct LoadedImage {
  std::vector<double> values;
  std::vector<int64_t> shape;  // (z, y, x) or (c, z, y, x)
  Spacing spacing;
  Affine affine;
};

LoadedImage load_image(const std::string& path, int expected_axes) {
  if (!std::filesystem::exists(path)) throw DataError("missing file: " + path);
  GzFile gz(path, "rb");
  if (!gz.f) throw DataError("cannot open '" + path + "'");
  Nifti1Header h = read_header(gz.f, path);
  int ndim = h.dim[0];
  // Trailing singleton axes are tolerated (e.g. 3-d saved as nx,ny,nz,1).
  while (ndim > expected_axes && h.dim[ndim] == 1) --ndim;
  if (ndim != expected_axes)
    throw DataError("nifti '" + path + "': expected " + std::to_string(expected_axes) +
                    " axes, file has " + std::to_string(h.dim[0]));
  int64_t nx = h.dim[1], ny = h.dim[2], nz = h.dim[3];
  int64_t nc = expected_axes == 4 ? h.dim[4] : 1;
  if (nx < 1 || ny < 1 || nz < 1 || nc < 1)
    throw DataError("nifti '" + path + "': degenerate dimensions");
  skip_to_offset(gz.f, h, path);
  int64_t numel = nx * ny * nz * nc;
  LoadedImage img;
  img.values = read_payload(gz.f, h, numel, path);
  img.spacing = Spacing{h.pixdim[3], h.pixdim[2], h.pixdim[1]};
  if (h.sform_code > 0) {
    for (int j = 0; j < 4; ++j) {
      img.affine.m[0 + j] = h.srow_x[j];
      img.affine.m[4 + j] = h.srow_y[j];
      img.affine.m[8 + j] = h.srow_z[j];
    }
  } else {
    img.affine = affine_from_spacing(img.spacing);
  }
  img.shape = expected_axes == 4 ? std::vector<int64_t>{nc, nz, ny, nx}
                                 : std::vector<int64_t>{nz, ny, nx};
  return img;
}

Nifti1Header make_header(const std::vector<int64_t>& shape_zyx, int64_t nc, const Spacing& s,
                         const Affine& a, int16_t datatype, int16_t bitpix) {
  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = nc > 1 ? 4 : 3;
  h.dim[1] = static_cast<int16_t>(shape_zyx[2]);
  h.dim[2] = static_cast<int16_t>(shape_zyx[1]);
  h.dim[3] = static_cast<int16_t>(shape_zyx[0]);
  h.dim[4] = static_cast<int16_t>(nc > 1 ? nc : 1);
  for (int i = h.dim[0] + 1; i < 8; ++i) h.dim[i] = 1;
  h.datatype = datatype;
  h.bitpix = bitpix;
  h.pixdim[0] = 1.0f;
  h.pixdim[1] = static_cast<float>(s.x);
  h.pixdim[2] = static_cast<float>(s.y);
  h.pixdim[3] = static_cast<float>(s.z);
  h.pixdim[4] = 1.0f;
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.xyzt_units = 2;  // millimetres
  h.qform_code = 0;
  h.sform_code = 1;
  for (int j = 0; j < 4; ++j) {
    h.srow_x[j] = static_cast<float>(a.m[0 + j]);
    h.srow_y[j] = static_cast<float>(a.m[4 + j]);
    h.srow_z[j] = static_cast<float>(a.m[8 + j]);
  }
  std::memcpy(h.magic, "n+1", 4);
  return h;
}

void write_image(const std::string& path, const Nifti1Header& h, const void* payload,
                 size_t payload_bytes) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::exists(parent))
    throw DataError("cannot save '" + path + "': parent directory does not exist");
  // "T" writes uncompressed through the same zlib path.
  GzFile gz(path, wants_gzip(path) ? "wb" : "wbT");
  if (!gz.f) throw DataError("cannot open '" + path + "' for writing");
  write_exact(gz.f, &h, sizeof(h), path);
  const char pad[4] = {0, 0, 0, 0};
  write_exact(gz.f, pad, 4, path);
  write_exact(gz.f, payload, payload_bytes, path);
}

}  // namespace

Volume load_volume(const std::string& path) {
  LoadedImage img = load_image(path, 3);
  Volume v;
  v.data = Tensor<float>(img.shape);
  for (int64_t i = 0; i < v.data.numel(); ++i) v.data[i] = static_cast<float>(img.values[i]);
  v.spacing = img.spacing;
  v.affine = img.affine;
  v.case_id = std::filesystem::path(path).filename().string();
  validate_volume(v, "load_volume('" + path + "')");
  return v;
}

void save_volume(const Volume& v, const std::string& path) {
  Nifti1Header h = make_header(v.data.shape(), 1, v.spacing, v.affine, DT_FLOAT32, 32);
  write_image(path, h, v.data.data(), sizeof(float) * static_cast<size_t>(v.data.numel()));
}

LabelMap load_labelmap(const std::string& path) {
  LoadedImage img = load_image(path, 3);
  LabelMap l;
  l.data = Tensor<uint8_t>(img.shape);
  for (int64_t i = 0; i < l.data.numel(); ++i) {
    double v = img.values[i];
    int64_t iv = static_cast<int64_t>(std::llround(v));
    if (std::abs(v - static_cast<double>(iv)) > 1e-6 || iv < 0 || iv > 255)
      throw DataError("label map '" + path + "': non-integer voxel value");
    l.data[i] = static_cast<uint8_t>(iv);
  }
  l.spacing = img.spacing;
  l.affine = img.affine;
  l.case_id = std::filesystem::path(path).filename().string();
  validate_labelmap(l, "load_labelmap('" + path + "')");
  return l;
}

void save_labelmap(const LabelMap& l, const std::string& path) {
  Nifti1Header h = make_header(l.data.shape(), 1, l.spacing, l.affine, DT_UINT8, 8);
  write_image(path, h, l.data.data(), static_cast<size_t>(l.data.numel()));
}

Tensor<float> load_prob_field(const std::string& path, Spacing* spacing) {
  LoadedImage img = load_image(path, 4);
  Tensor<float> t(img.shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(img.values[i]);
  if (spacing) *spacing = img.spacing;
  return t;
}

void save_prob_field(const Tensor<float>& probs, const Spacing& spacing, const Affine& affine,
                     const std::string& path) {
  if (probs.ndim() != 4) throw DataError("probability field must have 4 axes");
  std::vector<int64_t> zyx{probs.dim(1), probs.dim(2), probs.dim(3)};
  Nifti1Header h = make_header(zyx, probs.dim(0), spacing, affine, DT_FLOAT32, 32);
  write_image(path, h, probs.data(), sizeof(float) * static_cast<size_t>(probs.numel()));
}

}  // namespace udaseg
