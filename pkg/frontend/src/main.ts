import { ApiClient } from "./api.js";
import { Dashboard } from "./dashboard.js";

const root = document.getElementById("app");
if (root === null) throw new Error("missing #app mount point");

new Dashboard(root, new ApiClient("")).start();
