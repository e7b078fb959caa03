#include <malloc.h>

#include "cli.hpp"

int main(int argc, char** argv) {
    // Activations are a few MB each; keep freed blocks instead of
    // returning them to the kernel between layers.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return kgcnn::cli::dispatch(argc, argv);
}
