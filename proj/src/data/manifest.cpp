#include <fstream>
#include <iomanip>
#include <sstream>

#include "uscore/data.hpp"
#include "uscore/errors.hpp"

namespace uscore::data {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

Label parse_label(const std::string& text, const std::string& where) {
  if (text == "0" || text == "normal") return Label::normal;
  if (text == "1" || text == "anomalous") return Label::anomalous;
  throw DataError(where + ": unknown label '" + text + "'");
}

}  // namespace

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "path,label,cluster_id,mask\n";
  for (const auto& e : entries) {
    if (e.path.find(',') != std::string::npos || e.mask_path.find(',') != std::string::npos)
      throw DataError("manifest paths may not contain commas: " + e.path);
    out << e.path << ',' << static_cast<int>(e.label) << ',' << e.cluster_id << ',' << e.mask_path << '\n';
  }
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_csv_line(line);
    if (line_no == 1 && !fields.empty() && fields[0] == "path") continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() < 3) throw DataError(where + ": expected path,label,cluster_id");
    ManifestEntry e;
    e.path = trim(fields[0]);
    e.label = parse_label(trim(fields[1]), where);
    try {
      e.cluster_id = std::stoul(trim(fields[2]));
    } catch (const std::exception&) {
      throw DataError(where + ": bad cluster_id '" + fields[2] + "'");
    }
    if (fields.size() > 3) e.mask_path = trim(fields[3]);
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<LabeledImage> load_dataset(const std::filesystem::path& manifest_path) {
  const auto base = manifest_path.parent_path();
  std::vector<LabeledImage> images;
  for (const auto& e : read_manifest(manifest_path)) {
    LabeledImage img;
    img.pixels = read_image(base / std::filesystem::path(e.path));
    img.label = e.label;
    img.cluster_id = e.cluster_id;
    if (!e.mask_path.empty()) {
      const Tensor mask = read_image(base / std::filesystem::path(e.mask_path));
      if (mask.rank() != 2 || mask.dim(0) != img.height() || mask.dim(1) != img.width())
        throw DataError("mask " + e.mask_path + " does not match image " + e.path);
      img.anomaly_mask.resize(mask.size());
      for (std::size_t i = 0; i < mask.size(); ++i) img.anomaly_mask[i] = mask[i] > 0.5 ? 1 : 0;
    }
    images.push_back(std::move(img));
  }
  return images;
}

std::vector<ManifestEntry> write_images(const std::filesystem::path& manifest_dir, const std::string& subdir,
                                        std::span<const LabeledImage> images) {
  std::filesystem::create_directories(manifest_dir / subdir);
  std::vector<ManifestEntry> entries;
  entries.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << i;
    ManifestEntry e;
    e.path = subdir + "/" + name.str() + (images[i].channels() == 3 ? ".ppm" : ".pgm");
    e.label = images[i].label;
    e.cluster_id = images[i].cluster_id;
    write_image(manifest_dir / e.path, images[i].pixels);
    if (images[i].has_mask()) {
      e.mask_path = subdir + "/" + name.str() + "_mask.pgm";
      Tensor mask({images[i].height(), images[i].width()});
      for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = images[i].anomaly_mask[p] ? 1.0 : 0.0;
      write_image(manifest_dir / e.mask_path, mask);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace uscore::data
