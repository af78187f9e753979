#include <homoglab/cli.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    return homoglab::dispatch(argc, argv, std::cout, std::cerr);
}
