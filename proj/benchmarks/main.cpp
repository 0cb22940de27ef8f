#include <benchmark/benchmark.h>

// The distribution's prebuilt benchmark_main archive carries LTO bytecode
// that newer compilers reject, so the entry point lives here.
BENCHMARK_MAIN();
