#pragma once

#include <string>

#include "terragen/layout.hpp"

namespace terragen {

// One JSON document per sample:
//   {task, entities:[{category, box:[x1,y1,x2,y2]?, mask_file?}], caption:{category_id:count}}
// Masks are stored as 8-bit single-channel PNGs (0/255) next to the JSON;
// mask_file paths are relative to the JSON's directory.

void write_layout(const std::string& json_path, const Layout& layout);
Layout read_layout(const std::string& json_path);

}  // namespace terragen
