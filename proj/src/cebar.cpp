namespace hte {
}  // namespace hte
