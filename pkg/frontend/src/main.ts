import { App } from "./app.js";
import { ApiClient } from "./client.js";

const base = window.location.origin.replace(/\/$/, "");
const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
new App(new ApiClient(base), root);
