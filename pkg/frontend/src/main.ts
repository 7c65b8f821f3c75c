/** Entry point: mount the app on the page shell. The API lives on the same
 * origin (the UI is served by the review service under /ui). */

import { ReviewApi } from "./api.js";
import { createApp } from "./app.js";

const root = document.getElementById("app");
if (!root) throw new Error("page shell is missing #app");

const app = createApp(root, new ReviewApi(""));
void app.init();
