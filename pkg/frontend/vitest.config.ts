import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // The UI contract test ingests a mesh through a live server.
    testTimeout: 180_000,
    hookTimeout: 180_000,
  },
});
