// Writes the golden U-Net 3+ output used by the architecture tests:
//   vseg_make_golden <path>

#include <iostream>

#include "golden.hpp"
#include "vseg/checkpoint.hpp"

int main(int argc, char** argv)
{
    if (argc != 2) {
        std::cerr << "usage: vseg_make_golden <path>\n";
        return 1;
    }
    vseg::Checkpoint ckpt;
    ckpt.arch = vseg::testing::golden_arch();
    ckpt.seed = vseg::testing::kGoldenSeed;
    ckpt.tensors.push_back({"final", vseg::testing::golden_forward()});
    vseg::save_checkpoint(argv[1], ckpt);
    return 0;
}
