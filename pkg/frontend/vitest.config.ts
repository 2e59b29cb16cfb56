import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // CLI tests spawn a fresh tsx process per job; give them headroom.
    testTimeout: 30_000,
    hookTimeout: 30_000,
  },
});
