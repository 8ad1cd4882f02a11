#include "cervix/cli.hpp"

int main(int argc, char** argv) { return cervix::dispatch(argc, argv); }
