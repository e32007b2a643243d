#include "stainforge/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "stainforge/errors.hpp"

namespace fs = std::filesystem;

namespace stainforge {

namespace {

const char* split_name(int s) {
    switch (s) {
        case 0: return "train";
        case 1: return "val";
        case 2: return "internal_test";
        default: return "external_test";
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

} // namespace

void write_dataset(const SplitDataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.csv");
    std::ofstream splits(fs::path(dir) / "splits.csv");
    if (!manifest || !splits) throw IoError("cannot create dataset files in " + dir);
    manifest << "path,y,center_id,m00,m01,m02,m10,m11,m12\n";
    splits << "path,split\n";
    manifest.precision(9);

    std::map<std::pair<int, int>, int> counters; // (center, class) -> next index
    const Dataset* sets[4] = {&ds.train, &ds.val, &ds.internal_test, &ds.external_test};
    for (int s = 0; s < 4; ++s) {
        for (const LabeledPatch& item : sets[s]->items) {
            const int idx = counters[{item.center_id, item.y}]++;
            std::ostringstream rel;
            rel << "center_" << item.center_id << "/class_" << item.y << "/patch_" << idx
                << ".png";
            const fs::path full = fs::path(dir) / rel.str();
            fs::create_directories(full.parent_path());
            write_image(full.string(), item.patch);
            manifest << rel.str() << "," << item.y << "," << item.center_id;
            for (double v : item.m) manifest << "," << v;
            manifest << "\n";
            splits << rel.str() << "," << split_name(s) << "\n";
        }
    }
    if (!manifest || !splits) throw IoError("failed writing dataset files in " + dir);
}

SplitDataset load_dataset(const std::string& dir) {
    std::ifstream manifest(fs::path(dir) / "manifest.csv");
    std::ifstream splits(fs::path(dir) / "splits.csv");
    if (!manifest) throw IoError("missing manifest.csv in " + dir);
    if (!splits) throw IoError("missing splits.csv in " + dir);

    std::map<std::string, std::string> split_of;
    std::string line;
    std::getline(splits, line); // header
    while (std::getline(splits, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 2) throw IoError("bad splits.csv line: " + line);
        split_of[cells[0]] = cells[1];
    }

    SplitDataset ds;
    int max_class = -1;
    std::getline(manifest, line); // header
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 9) throw IoError("bad manifest.csv line: " + line);
        LabeledPatch item;
        item.patch = read_image((fs::path(dir) / cells[0]).string());
        item.y = std::stoi(cells[1]);
        item.center_id = std::stoi(cells[2]);
        for (int i = 0; i < 6; ++i) item.m[static_cast<size_t>(i)] = std::stod(cells[3 + i]);
        max_class = std::max(max_class, item.y);

        const auto it = split_of.find(cells[0]);
        if (it == split_of.end()) throw IoError("patch missing from splits.csv: " + cells[0]);
        if (it->second == "train")
            ds.train.items.push_back(std::move(item));
        else if (it->second == "val")
            ds.val.items.push_back(std::move(item));
        else if (it->second == "internal_test")
            ds.internal_test.items.push_back(std::move(item));
        else if (it->second == "external_test")
            ds.external_test.items.push_back(std::move(item));
        else
            throw IoError("unknown split: " + it->second);
    }
    const int n_classes = max_class + 1;
    ds.train.n_classes = ds.val.n_classes = ds.internal_test.n_classes =
        ds.external_test.n_classes = n_classes;
    return ds;
}

} // namespace stainforge
