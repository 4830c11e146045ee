#include "ltn/app.hpp"

int main(int argc, char** argv) { return ltn::app::main(argc, argv); }
