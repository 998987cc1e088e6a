#include "sparsebump/lab.hpp"

int main(int argc, char** argv) { return sparsebump::lab::cli_main(argc, argv); }
