import { ApiClient } from "./api.js";
import { App } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "";

const app = new App(new ApiClient(base));
if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", () => app.start());
} else {
  app.start();
}
