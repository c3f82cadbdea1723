#include <iostream>

int main() {
  std::cout << "ship\n";
  return 0;
}
