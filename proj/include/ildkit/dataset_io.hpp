#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ildkit/common.hpp"
#include "ildkit/synthdata.hpp"

namespace ildkit {

// Dataset directory layout:
//   <dir>/slices/slice_NNNNN.slice   int16 LE HU grid (row-major), then u8 mask
//   <dir>/manifest.txt               written last; completes the dataset
//
// manifest.txt:
//   ildkit-dataset 1
//   # provenance: <seed/config/version line>
//   grid <H> <W>
//   classes 4
//   slice <patient_id> <relative path>
//   ...

namespace detail {

inline void put_i16_le(std::ostream& os, std::int16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline std::int16_t get_i16_le(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::int16_t>(static_cast<std::uint16_t>(b[0]) |
                                   (static_cast<std::uint16_t>(b[1]) << 8));
}

}  // namespace detail

inline void write_slice_file(const std::filesystem::path& path,
                             const LabeledSlice& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot write slice file: " + path.string());
  for (std::int16_t v : s.hu) detail::put_i16_le(os, v);
  os.write(reinterpret_cast<const char*>(s.mask.data()),
           static_cast<std::streamsize>(s.mask.size()));
  if (!os) throw data_error("short write: " + path.string());
}

inline LabeledSlice read_slice_file(const std::filesystem::path& path, int h, int w,
                                    const std::string& patient_id) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot read slice file: " + path.string());
  LabeledSlice s;
  s.height = h;
  s.width = w;
  s.patient_id = patient_id;
  std::size_t n = static_cast<std::size_t>(h) * w;
  s.hu.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.hu[i] = detail::get_i16_le(is);
  s.mask.resize(n);
  is.read(reinterpret_cast<char*>(s.mask.data()), static_cast<std::streamsize>(n));
  if (!is) throw data_error("truncated slice file: " + path.string());
  for (std::uint8_t m : s.mask)
    if (m > kNumClasses) throw data_error("invalid mask id in " + path.string());
  return s;
}

inline void write_dataset(const std::filesystem::path& dir,
                          const std::vector<LabeledSlice>& slices,
                          const std::string& provenance) {
  if (slices.empty()) throw data_error("write_dataset: no slices");
  std::filesystem::create_directories(dir / "slices");
  std::ostringstream manifest;
  manifest << "ildkit-dataset 1\n";
  manifest << "# provenance: " << provenance << "\n";
  manifest << "grid " << slices[0].height << " " << slices[0].width << "\n";
  manifest << "classes " << kNumClasses << "\n";
  for (std::size_t i = 0; i < slices.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "slice_%05zu.slice", i);
    write_slice_file(dir / "slices" / name, slices[i]);
    manifest << "slice " << slices[i].patient_id << " slices/" << name << "\n";
  }
  // Manifest last: a readable manifest marks the directory complete.
  std::ofstream mf(dir / "manifest.txt", std::ios::binary);
  mf << manifest.str();
  if (!mf) throw data_error("cannot write manifest in " + dir.string());
}

inline std::vector<LabeledSlice> read_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.txt");
  if (!mf) throw data_error("no manifest.txt in " + dir.string() +
                            " (incomplete or missing dataset)");
  std::string line;
  if (!std::getline(mf, line) || line.rfind("ildkit-dataset 1", 0) != 0)
    throw data_error("unrecognized manifest header in " + dir.string());
  int h = -1, w = -1;
  std::vector<LabeledSlice> slices;
  while (std::getline(mf, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "grid") {
      ls >> h >> w;
    } else if (tag == "classes") {
      int c;
      ls >> c;
      if (c != kNumClasses) throw data_error("dataset class count mismatch");
    } else if (tag == "slice") {
      std::string pid, rel;
      ls >> pid >> rel;
      if (h <= 0 || w <= 0) throw data_error("manifest lists slices before grid");
      slices.push_back(read_slice_file(dir / rel, h, w, pid));
    }
  }
  if (slices.empty()) throw data_error("manifest lists no slices: " + dir.string());
  return slices;
}

}  // namespace ildkit
