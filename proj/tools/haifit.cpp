#include "haifit/cli.hpp"

int main(int argc, char** argv) { return haifit::run_cli(argc, argv); }
