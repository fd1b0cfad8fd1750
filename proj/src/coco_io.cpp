#include "attnmask/coco_io.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"

namespace attnmask {

using nlohmann::json;

namespace {

json parse_or_throw(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw CocoError(std::string(what) + ": malformed JSON (" + e.what() + ")");
  }
}

std::string record_name(const char* array, std::size_t i, const json& rec) {
  std::string s = std::string(array) + "[" + std::to_string(i) + "]";
  if (rec.is_object() && rec.contains("id") && rec.at("id").is_number_integer()) {
    s += " (id " + std::to_string(rec.at("id").get<std::int64_t>()) + ")";
  }
  return s;
}

const json& field(const json& rec, const char* key, const std::string& where) {
  if (!rec.is_object()) throw CocoError(where + ": expected an object");
  if (!rec.contains(key)) throw CocoError(where + ": missing '" + key + "'");
  return rec.at(key);
}

std::int64_t int_field(const json& rec, const char* key, const std::string& where) {
  const json& v = field(rec, key, where);
  if (!v.is_number_integer()) throw CocoError(where + ": '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

double number_field(const json& rec, const char* key, const std::string& where) {
  const json& v = field(rec, key, where);
  if (!v.is_number()) throw CocoError(where + ": '" + key + "' must be a number");
  return v.get<double>();
}

Box bbox_field(const json& rec, const std::string& where) {
  const json& v = field(rec, "bbox", where);
  if (!v.is_array() || v.size() != 4) throw CocoError(where + ": bbox must have 4 numbers");
  std::array<double, 4> xywh{};
  for (std::size_t k = 0; k < 4; ++k) {
    if (!v[k].is_number()) throw CocoError(where + ": bbox must have 4 numbers");
    xywh[k] = v[k].get<double>();
  }
  if (!(xywh[2] > 0.0) || !(xywh[3] > 0.0)) throw CocoError(where + ": bbox width and height must be positive");
  return Box::from_coco(xywh);
}

const json& array_field(const json& doc, const char* key) {
  if (!doc.contains(key)) throw CocoError(std::string("ground truth: missing '") + key + "'");
  const json& v = doc.at(key);
  if (!v.is_array()) throw CocoError(std::string("ground truth: '") + key + "' must be an array");
  return v;
}

}  // namespace

CocoGroundTruth parse_coco_gt(const std::string& json_text) {
  const json doc = parse_or_throw(json_text, "ground truth");
  if (!doc.is_object()) throw CocoError("ground truth: expected an object");
  CocoGroundTruth gt;
  std::set<std::int64_t> image_ids;

  const json& images = array_field(doc, "images");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = record_name("images", i, images[i]);
    CocoImage im{int_field(images[i], "id", where), 0, 0};
    if (images[i].contains("width")) im.width = static_cast<int>(int_field(images[i], "width", where));
    if (images[i].contains("height")) im.height = static_cast<int>(int_field(images[i], "height", where));
    if (!image_ids.insert(im.id).second) throw CocoError(where + ": duplicate image id");
    gt.images.push_back(im);
  }

  const json& cats = array_field(doc, "categories");
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string where = record_name("categories", i, cats[i]);
    const int id = static_cast<int>(int_field(cats[i], "id", where));
    std::string name;
    if (cats[i].contains("name") && cats[i].at("name").is_string()) name = cats[i].at("name").get<std::string>();
    if (!gt.categories.emplace(id, name).second) throw CocoError(where + ": duplicate category id");
  }

  const json& anns = array_field(doc, "annotations");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string where = record_name("annotations", i, anns[i]);
    GtRecord r;
    r.image_id = int_field(anns[i], "image_id", where);
    if (!image_ids.count(r.image_id)) {
      throw CocoError(where + ": unknown image_id " + std::to_string(r.image_id));
    }
    r.category_id = static_cast<int>(int_field(anns[i], "category_id", where));
    if (!gt.categories.count(r.category_id)) {
      throw CocoError(where + ": unknown category_id " + std::to_string(r.category_id));
    }
    r.box = bbox_field(anns[i], where);
    if (anns[i].contains("iscrowd")) r.iscrowd = int_field(anns[i], "iscrowd", where) != 0;
    gt.annotations.push_back(r);
  }
  return gt;
}

std::vector<Detection> parse_coco_detections(const std::string& json_text, const CocoGroundTruth& gt) {
  const json doc = parse_or_throw(json_text, "detections");
  if (!doc.is_array()) throw CocoError("detections: expected an array");
  std::set<std::int64_t> image_ids;
  for (const auto& im : gt.images) image_ids.insert(im.id);
  std::vector<Detection> dets;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = record_name("detections", i, doc[i]);
    Detection d;
    d.image_id = int_field(doc[i], "image_id", where);
    if (!image_ids.count(d.image_id)) {
      throw CocoError(where + ": unknown image_id " + std::to_string(d.image_id));
    }
    d.category_id = static_cast<int>(int_field(doc[i], "category_id", where));
    if (!gt.categories.count(d.category_id)) {
      throw CocoError(where + ": unknown category_id " + std::to_string(d.category_id));
    }
    d.box = bbox_field(doc[i], where);
    d.score = number_field(doc[i], "score", where);
    if (!std::isfinite(d.score)) throw CocoError(where + ": score must be finite");
    dets.push_back(d);
  }
  return dets;
}

std::string coco_gt_json(const CocoGroundTruth& gt) {
  json doc;
  doc["images"] = json::array();
  for (const auto& im : gt.images) {
    doc["images"].push_back({{"id", im.id}, {"width", im.width}, {"height", im.height}});
  }
  doc["categories"] = json::array();
  for (const auto& [id, name] : gt.categories) doc["categories"].push_back({{"id", id}, {"name", name}});
  doc["annotations"] = json::array();
  std::int64_t next_id = 1;
  for (const auto& a : gt.annotations) {
    doc["annotations"].push_back({{"id", next_id++},
                                  {"image_id", a.image_id},
                                  {"category_id", a.category_id},
                                  {"bbox", a.box.to_coco()},
                                  {"area", a.box.area()},
                                  {"iscrowd", a.iscrowd ? 1 : 0}});
  }
  return doc.dump(2) + "\n";
}

std::string coco_detections_json(const std::vector<Detection>& dets) {
  json doc = json::array();
  for (const auto& d : dets) {
    doc.push_back({{"image_id", d.image_id},
                   {"category_id", d.category_id},
                   {"bbox", d.box.to_coco()},
                   {"score", d.score}});
  }
  return doc.dump(2) + "\n";
}

std::string eval_report_json(const EvalReport& report) {
  json doc;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  doc["map50"] = opt(report.map50);
  doc["map75"] = opt(report.map75);
  doc["map_coco"] = opt(report.map_coco);
  doc["thresholds"] = json::array();
  for (const auto& t : report.thresholds) {
    json th{{"iou_threshold", t.iou_threshold}, {"map", t.map}, {"tp", t.tp}, {"fp", t.fp}, {"fn", t.fn}};
    th["classes"] = json::array();
    for (const auto& c : t.classes) {
      th["classes"].push_back({{"category_id", c.category_id}, {"ap", c.ap}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}});
    }
    doc["thresholds"].push_back(th);
  }
  return doc.dump(2) + "\n";
}

std::vector<double> parse_thresholds(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }),
               item.end());
    if (item.empty()) continue;
    if (item == "coco") {
      for (double t : coco_thresholds()) out.push_back(t);
      continue;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !(v > 0.0) || v > 1.0) {
      throw std::invalid_argument("thresholds: bad value '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("thresholds: none given");
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace attnmask
