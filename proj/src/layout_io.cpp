#include "terragen/layout_io.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "terragen/image.hpp"

namespace terragen {

namespace fs = std::filesystem;
using nlohmann::json;

void write_layout(const std::string& json_path, const Layout& layout) {
    fs::path jp(json_path);
    std::string stem = jp.stem().string();
    fs::path dir = jp.parent_path();

    json doc;
    doc["task"] = task_name(layout.task);
    json ents = json::array();
    for (size_t i = 0; i < layout.entities.size(); ++i) {
        const auto& e = layout.entities[i];
        json je;
        je["category"] = e.category;
        if (e.box) je["box"] = {e.box->x1, e.box->y1, e.box->x2, e.box->y2};
        if (e.mask) {
            std::string mask_name = stem + "_m" + std::to_string(i) + ".png";
            ImageU8 img = ImageU8::create(e.mask->width, e.mask->height, 1);
            for (int r = 0; r < e.mask->height; ++r)
                for (int c = 0; c < e.mask->width; ++c) img.at(r, c, 0) = e.mask->at(r, c) ? 255 : 0;
            write_png((dir / mask_name).string(), img);
            je["mask_file"] = mask_name;
        }
        ents.push_back(std::move(je));
    }
    doc["entities"] = std::move(ents);
    json cap = json::object();
    for (const auto& [cat, count] : layout.caption) cap[std::to_string(cat)] = count;
    doc["caption"] = std::move(cap);

    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("write_layout: cannot open " + json_path);
    out << doc.dump(2) << "\n";
}

Layout read_layout(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error("read_layout: cannot open " + json_path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("read_layout: corrupt JSON in " + json_path + ": " + e.what());
    }
    fs::path dir = fs::path(json_path).parent_path();

    Layout layout;
    layout.task = parse_task(doc.at("task").get<std::string>());
    for (const auto& je : doc.at("entities")) {
        LayoutEntity e;
        e.category = je.at("category").get<int>();
        if (je.contains("box")) {
            auto b = je.at("box").get<std::vector<double>>();
            if (b.size() != 4) throw std::runtime_error("read_layout: box must have 4 values in " + json_path);
            e.box = BBox{b[0], b[1], b[2], b[3]};
        }
        if (je.contains("mask_file")) {
            std::string mf = je.at("mask_file").get<std::string>();
            ImageU8 img = read_png((dir / mf).string());
            if (img.channels != 1) throw std::runtime_error("read_layout: mask " + mf + " is not single-channel");
            Mask m = Mask::zeros(img.height, img.width);
            for (int r = 0; r < img.height; ++r)
                for (int c = 0; c < img.width; ++c) m.at(r, c) = img.at(r, c, 0) >= 128 ? 1 : 0;
            e.mask = std::move(m);
        }
        if (!e.box && !e.mask) throw std::runtime_error("read_layout: entity with neither box nor mask in " + json_path);
        layout.entities.push_back(std::move(e));
    }
    if (doc.contains("caption")) {
        for (const auto& [key, val] : doc.at("caption").items()) {
            layout.caption[std::stoi(key)] = val.get<int>();
        }
    } else {
        layout.recount_caption();
    }
    return layout;
}

}  // namespace terragen
