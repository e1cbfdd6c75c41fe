import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // the e2e suite boots the real session service
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
